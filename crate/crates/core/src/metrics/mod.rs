//! Evaluation metrics: BLEU, ROUGE-1/2/L, BERTScore, BLEURT pass-through and
//! word count. Every bounded score is reported on a 0–100 scale.

pub mod bertscore;
pub mod bleu;
pub mod providers;
pub mod rouge;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bertscore::{bertscore, bertscore_idf, EmbeddingMatrix, IdfTable};
pub use bleu::{bleu, BleuConfig, Smoothing};
pub use providers::{BleurtPair, BleurtProvider, EmbeddingProvider};
pub use rouge::{lcs_length, rouge_l, rouge_n};

use crate::retry::RemoteError;
use crate::text_norm::{tokenize, NormalizationConfig, TokenSequence};

/// Precision, recall and F1, each in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfTriple {
    pub const ZERO: PrfTriple = PrfTriple {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub const FULL: PrfTriple = PrfTriple {
        precision: 100.0,
        recall: 100.0,
        f1: 100.0,
    };

    /// Builds from precision and recall given as fractions in [0, 1].
    pub fn from_fractions(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrfTriple {
            precision: precision * 100.0,
            recall: recall * 100.0,
            f1: f1 * 100.0,
        }
    }
}

/// All metric values for one candidate/reference pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub bleu: f64,
    pub rouge1: PrfTriple,
    pub rouge2: PrfTriple,
    pub rouge_l: PrfTriple,
    /// Absent only in a partial set returned after the embedding provider failed.
    pub bert: Option<PrfTriple>,
    /// Provider-defined scale; absent when no BLEURT provider is configured.
    pub bleurt: Option<f64>,
    pub word_count: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub incomplete: bool,
}

impl ScoreSet {
    pub fn bert_p(&self) -> Option<f64> {
        self.bert.map(|b| b.precision)
    }

    pub fn bert_r(&self) -> Option<f64> {
        self.bert.map(|b| b.recall)
    }

    pub fn bert_f1(&self) -> Option<f64> {
        self.bert.map(|b| b.f1)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub normalization: NormalizationConfig,
    pub bleu: BleuConfig,
    /// Weights BERTScore matches by inverse document frequency when set.
    #[serde(skip)]
    pub idf: Option<Arc<IdfTable>>,
}

impl PartialEq for MetricConfig {
    fn eq(&self, other: &Self) -> bool {
        self.normalization == other.normalization && self.bleu == other.bleu && self.idf == other.idf
    }
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A provider stayed unreachable; `partial` holds every metric computed locally.
    #[error("provider error: {source}")]
    Provider {
        partial: Box<ScoreSet>,
        #[source]
        source: RemoteError,
    },
}

impl From<crate::Error> for ScoreError {
    fn from(e: crate::Error) -> Self {
        ScoreError::InvalidArgument(e.to_string())
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Embeds a sequence through a provider, checking the row count.
pub fn embed_sequence(provider: &dyn EmbeddingProvider, tokens: &TokenSequence) -> Result<EmbeddingMatrix, RemoteError> {
    let rows = provider.embed(tokens)?;
    EmbeddingMatrix::new(tokens.clone(), rows).map_err(|e| RemoteError::Terminal(e.to_string()))
}

pub fn score_pair(
    candidate: &str,
    reference: &str,
    config: &MetricConfig,
    embedder: &dyn EmbeddingProvider,
    bleurt: Option<&dyn BleurtProvider>,
) -> Result<ScoreSet, ScoreError> {
    let c = tokenize(candidate, &config.normalization);
    let r = tokenize(reference, &config.normalization);
    if r.is_empty() {
        return Err(ScoreError::InvalidArgument("reference must be non-empty".into()));
    }

    let mut set = ScoreSet {
        bleu: bleu(&c, &r, &config.bleu)?,
        rouge1: rouge_n(&c, &r, 1)?,
        rouge2: rouge_n(&c, &r, 2)?,
        rouge_l: rouge_l(&c, &r),
        bert: None,
        bleurt: None,
        word_count: word_count(candidate),
        incomplete: false,
    };

    let mut failure = None;
    if c.is_empty() {
        set.bert = Some(PrfTriple::ZERO);
    } else {
        let scored = embed_sequence(embedder, &c).and_then(|ce| {
            let re = embed_sequence(embedder, &r)?;
            match &config.idf {
                Some(idf) => bertscore_idf(&ce, &re, idf),
                None => bertscore(&ce, &re),
            }
            .map_err(|e| RemoteError::Terminal(e.to_string()))
        });
        match scored {
            Ok(b) => set.bert = Some(b),
            Err(e) => failure = Some(e),
        }
    }

    if let Some(provider) = bleurt {
        let pair = BleurtPair {
            candidate: candidate.to_owned(),
            reference: reference.to_owned(),
        };
        match provider.score(std::slice::from_ref(&pair)) {
            Ok(scores) if scores.len() == 1 => set.bleurt = Some(scores[0]),
            Ok(scores) => {
                failure.get_or_insert(RemoteError::Terminal(format!("BLEURT returned {} scores for 1 pair", scores.len())));
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }

    match failure {
        None => Ok(set),
        Some(source) => {
            set.incomplete = true;
            Err(ScoreError::Provider {
                partial: Box::new(set),
                source,
            })
        }
    }
}
