//! Novelty filter: a candidate is kept only if its question's ROUGE-L F1
//! against every question already in the pool stays below a threshold.

use crate::dataset::InstructionRecord;
use crate::generate::parse::CandidateRecord;
use crate::metrics::rouge_l;
use crate::text_norm::{tokenize, NormalizationConfig, TokenSequence};

/// Tokenized questions seen so far.
#[derive(Debug, Clone, Default)]
pub struct DedupPool {
    inputs: Vec<TokenSequence>,
    norm: NormalizationConfig,
}

impl DedupPool {
    pub fn new<'a, I: IntoIterator<Item = &'a str>>(inputs: I) -> Self {
        let norm = NormalizationConfig::default();
        DedupPool {
            inputs: inputs.into_iter().map(|s| tokenize(s, &norm)).collect(),
            norm,
        }
    }

    pub fn from_records(records: &[InstructionRecord]) -> Self {
        Self::new(records.iter().map(|r| r.input.as_str()))
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Highest ROUGE-L F1 of `input` against the pool (0 for an empty pool).
    pub fn max_similarity(&self, input: &str) -> f64 {
        let t = tokenize(input, &self.norm);
        self.inputs.iter().map(|p| rouge_l(&t, p).f1).fold(0.0, f64::max)
    }

    /// Adds `input` and returns true when it is novel under `threshold`.
    pub fn admit(&mut self, input: &str, threshold: f64) -> bool {
        let t = tokenize(input, &self.norm);
        let novel = self.inputs.iter().all(|p| rouge_l(&t, p).f1 < threshold);
        if novel {
            self.inputs.push(t);
        }
        novel
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupOutcome {
    pub accepted: Vec<CandidateRecord>,
    pub rejected: Vec<CandidateRecord>,
}

/// Filters candidates in order; each accepted candidate joins the comparison
/// pool before the next one is checked.
pub fn dedup_filter(candidates: Vec<CandidateRecord>, pool: &[InstructionRecord], threshold: f64) -> DedupOutcome {
    let mut pool = DedupPool::from_records(pool);
    let mut out = DedupOutcome::default();
    for c in candidates {
        if pool.admit(&c.input, threshold) {
            out.accepted.push(c);
        } else {
            out.rejected.push(c);
        }
    }
    out
}
