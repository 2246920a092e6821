//! Sentence-level BLEU with clipped n-gram precision and brevity penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_norm::{ngrams, Token};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Smoothing {
    /// Any zero precision makes the score zero.
    None,
    /// Zero precisions are replaced by `epsilon`.
    AddEpsilon { epsilon: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::AddEpsilon { epsilon: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_n: 4,
            smoothing: Smoothing::default(),
        }
    }
}

impl BleuConfig {
    pub fn unsmoothed(max_n: usize) -> Self {
        BleuConfig {
            max_n,
            smoothing: Smoothing::None,
        }
    }
}

/// Per-order precision counts for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderCounts {
    pub n: usize,
    /// Σ_g min(count_c(g), count_r(g))
    pub clipped: usize,
    /// Candidate n-grams that occur in the reference at all, with multiplicity.
    pub unclipped: usize,
    /// Candidate n-gram count.
    pub total: usize,
}

pub fn order_counts(candidate: &[Token], reference: &[Token], max_n: usize) -> Result<Vec<OrderCounts>> {
    if max_n < 1 {
        return Err(Error::invalid("BLEU max_n must be at least 1"));
    }
    (1..=max_n)
        .map(|n| {
            let c = ngrams(candidate, n)?;
            let r = ngrams(reference, n)?;
            let unclipped = c.iter().filter(|(g, _)| r.count(g) > 0).map(|(_, k)| k).sum();
            Ok(OrderCounts {
                n,
                clipped: c.clipped_overlap(&r),
                unclipped,
                total: c.total(),
            })
        })
        .collect()
}

/// BLEU on a 0–100 scale.
///
/// Orders longer than the candidate are left out of the geometric mean, so a
/// non-empty sequence always scores 100 against itself. An empty candidate
/// scores 0.
pub fn bleu(candidate: &[Token], reference: &[Token], config: &BleuConfig) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::invalid("BLEU reference must be non-empty"));
    }
    if config.max_n < 1 {
        return Err(Error::invalid("BLEU max_n must be at least 1"));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let order = config.max_n.min(candidate.len());
    let mut log_sum = 0.0;
    for counts in order_counts(candidate, reference, order)? {
        let p = if counts.clipped == 0 {
            match config.smoothing {
                Smoothing::None => return Ok(0.0),
                Smoothing::AddEpsilon { epsilon } => epsilon,
            }
        } else {
            counts.clipped as f64 / counts.total as f64
        };
        log_sum += p.ln();
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok(100.0 * bp * (log_sum / order as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text_norm::TokenSequence;
    use proptest::prelude::*;

    fn seq(s: &str) -> TokenSequence {
        TokenSequence::from_words(s.split_whitespace()).unwrap()
    }

    #[test]
    fn identity_is_100() {
        let x = seq("the cat sat on the mat");
        assert_eq!(bleu(&x, &x, &BleuConfig::default()).unwrap(), 100.0);
        assert_eq!(bleu(&x, &x, &BleuConfig::unsmoothed(4)).unwrap(), 100.0);
    }

    #[test]
    fn clipped_unigram_case() {
        // reference has "the" twice, so 2 of the 7 candidate tokens are credited
        let c = seq("the the the the the the the");
        let r = seq("the cat is on the mat");
        let score = bleu(&c, &r, &BleuConfig::unsmoothed(1)).unwrap();
        assert!((score - 100.0 * 2.0 / 7.0).abs() < 1e-9);
        assert_eq!((score * 100.0).round() / 100.0, 28.57);
    }

    #[test]
    fn zero_overlap_unsmoothed() {
        assert_eq!(bleu(&seq("a b"), &seq("c d"), &BleuConfig::unsmoothed(4)).unwrap(), 0.0);
    }

    #[test]
    fn smoothing_keeps_score_positive() {
        let s = bleu(&seq("a b"), &seq("c d"), &BleuConfig::default()).unwrap();
        assert!(s > 0.0 && s < 1e-6);
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let s = bleu(&seq("a"), &seq("a b c d"), &BleuConfig::unsmoothed(4)).unwrap();
        assert!((s - 100.0 * (-3.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn empty_cases() {
        assert!(matches!(bleu(&seq("a"), &seq(""), &BleuConfig::default()), Err(Error::InvalidArgument(_))));
        assert_eq!(bleu(&seq(""), &seq("a"), &BleuConfig::default()).unwrap(), 0.0);
        assert!(bleu(&seq("a"), &seq("a"), &BleuConfig::unsmoothed(0)).is_err());
    }

    proptest! {
        #[test]
        fn clipped_never_exceeds_unclipped(
            c in prop::collection::vec("[a-d]", 0..10),
            r in prop::collection::vec("[a-d]", 1..10),
        ) {
            let c = TokenSequence::from_words(c).unwrap();
            let r = TokenSequence::from_words(r).unwrap();
            for o in order_counts(&c, &r, 4).unwrap() {
                prop_assert!(o.clipped <= o.unclipped);
                prop_assert!(o.unclipped <= o.total);
            }
        }

        #[test]
        fn bounded(
            c in prop::collection::vec("[a-d]", 0..10),
            r in prop::collection::vec("[a-d]", 1..10),
        ) {
            let c = TokenSequence::from_words(c).unwrap();
            let r = TokenSequence::from_words(r).unwrap();
            for cfg in [BleuConfig::default(), BleuConfig::unsmoothed(4)] {
                let s = bleu(&c, &r, &cfg).unwrap();
                prop_assert!((0.0..=100.0).contains(&s));
            }
        }
    }
}
