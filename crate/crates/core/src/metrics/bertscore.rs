//! Greedy-matching BERTScore over caller-supplied token embeddings.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::metrics::PrfTriple;
use crate::text_norm::{Token, TokenSequence};

/// Token embeddings with every row L2-normalized at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    tokens: TokenSequence,
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl EmbeddingMatrix {
    pub fn new(tokens: TokenSequence, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != tokens.len() {
            return Err(Error::invalid(format!(
                "{} embedding rows for {} tokens",
                rows.len(),
                tokens.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if !rows.is_empty() && dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        let mut normalized = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::invalid(format!("row {i} has dimension {}, expected {dim}", row.len())));
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::invalid(format!("row {i} cannot be normalized (norm {norm})")));
            }
            normalized.push(row.into_iter().map(|x| x / norm).collect());
        }
        Ok(EmbeddingMatrix {
            tokens,
            rows: normalized,
            dim,
        })
    }

    pub fn tokens(&self) -> &TokenSequence {
        &self.tokens
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Best cosine similarity of each row of `from` against all rows of `to`,
/// clamped into [0, 1].
fn best_matches(from: &EmbeddingMatrix, to: &EmbeddingMatrix) -> Vec<f64> {
    from.rows
        .iter()
        .map(|a| {
            to.rows
                .iter()
                .map(|b| dot(a, b))
                .fold(f64::NEG_INFINITY, f64::max)
                .clamp(0.0, 1.0)
        })
        .collect()
}

fn check_pair(c: &EmbeddingMatrix, r: &EmbeddingMatrix) -> Result<()> {
    if c.is_empty() || r.is_empty() {
        return Err(Error::invalid("BERTScore needs non-empty embedding matrices"));
    }
    if c.dim != r.dim {
        return Err(Error::invalid(format!("embedding dimensions differ: {} vs {}", c.dim, r.dim)));
    }
    Ok(())
}

/// Unweighted greedy matching: precision averages each candidate token's best
/// match in the reference, recall each reference token's best match in the
/// candidate. Negative similarities count as 0.
pub fn bertscore(candidate: &EmbeddingMatrix, reference: &EmbeddingMatrix) -> Result<PrfTriple> {
    check_pair(candidate, reference)?;
    let p = best_matches(candidate, reference);
    let r = best_matches(reference, candidate);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(PrfTriple::from_fractions(mean(&p), mean(&r)))
}

/// Inverse document frequencies over a reference collection:
/// `idf(w) = ln((M + 1) / (df(w) + 1))`; unseen tokens get `ln(M + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    docs: usize,
    df: HashMap<Token, usize>,
}

impl IdfTable {
    pub fn from_documents<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a TokenSequence>,
    {
        let mut df: HashMap<Token, usize> = HashMap::new();
        let mut count = 0;
        for doc in docs {
            count += 1;
            let mut seen: Vec<&Token> = doc.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        IdfTable { docs: count, df }
    }

    pub fn weight(&self, token: &Token) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((self.docs as f64 + 1.0) / (df as f64 + 1.0)).ln()
    }
}

/// IDF-weighted greedy matching. Falls back to uniform weights on a side whose
/// weights sum to zero.
pub fn bertscore_idf(candidate: &EmbeddingMatrix, reference: &EmbeddingMatrix, idf: &IdfTable) -> Result<PrfTriple> {
    check_pair(candidate, reference)?;
    let weighted = |m: &EmbeddingMatrix, best: Vec<f64>| {
        let w: Vec<f64> = m.tokens.iter().map(|t| idf.weight(t)).collect();
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            best.iter().sum::<f64>() / best.len() as f64
        } else {
            best.iter().zip(&w).map(|(b, w)| b * w).sum::<f64>() / total
        }
    };
    let p = weighted(candidate, best_matches(candidate, reference));
    let r = weighted(reference, best_matches(reference, candidate));
    Ok(PrfTriple::from_fractions(p.min(1.0), r.min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(words: &[&str], vocab: &[&str]) -> EmbeddingMatrix {
        let tokens = TokenSequence::from_words(words.iter().copied()).unwrap();
        let rows = words
            .iter()
            .map(|w| vocab.iter().map(|v| if v == w { 1.0 } else { 0.0 }).collect())
            .collect();
        EmbeddingMatrix::new(tokens, rows).unwrap()
    }

    #[test]
    fn rows_are_normalized() {
        let m = EmbeddingMatrix::new(TokenSequence::from_words(["a"]).unwrap(), vec![vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.rows()[0], vec![0.6, 0.8]);
    }

    #[test]
    fn identical_one_hot_is_full() {
        let v = ["a", "b", "c"];
        let m = one_hot(&["a", "b", "c"], &v);
        assert_eq!(bertscore(&m, &m).unwrap(), PrfTriple::FULL);
    }

    #[test]
    fn half_overlap() {
        let v = ["a", "b", "c"];
        let p = bertscore(&one_hot(&["a", "b"], &v), &one_hot(&["a", "c"], &v)).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (50.0, 50.0, 50.0));
    }

    #[test]
    fn orthogonal_tokens_score_zero() {
        let v = ["a", "b"];
        assert_eq!(bertscore(&one_hot(&["a"], &v), &one_hot(&["b"], &v)).unwrap(), PrfTriple::ZERO);
    }

    #[test]
    fn negative_similarity_clamps_to_zero() {
        let a = EmbeddingMatrix::new(TokenSequence::from_words(["a"]).unwrap(), vec![vec![1.0, 0.0]]).unwrap();
        let b = EmbeddingMatrix::new(TokenSequence::from_words(["b"]).unwrap(), vec![vec![-1.0, 0.0]]).unwrap();
        assert_eq!(bertscore(&a, &b).unwrap(), PrfTriple::ZERO);
    }

    #[test]
    fn construction_errors() {
        let t = TokenSequence::from_words(["a", "b"]).unwrap();
        assert!(EmbeddingMatrix::new(t.clone(), vec![vec![1.0]]).is_err());
        assert!(EmbeddingMatrix::new(t.clone(), vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(EmbeddingMatrix::new(t.clone(), vec![vec![1.0], vec![0.0]]).is_err());
        assert!(EmbeddingMatrix::new(t, vec![vec![], vec![]]).is_err());
    }

    #[test]
    fn dimension_mismatch_and_empty() {
        let a = one_hot(&["a"], &["a", "b"]);
        let b = one_hot(&["a"], &["a", "b", "c"]);
        assert!(bertscore(&a, &b).is_err());
        let empty = EmbeddingMatrix::new(TokenSequence::default(), vec![]).unwrap();
        assert!(bertscore(&a, &empty).is_err());
    }

    #[test]
    fn idf_downweights_common_tokens() {
        let docs: Vec<TokenSequence> = ["the van", "the bus", "the car"]
            .iter()
            .map(|s| TokenSequence::from_words(s.split_whitespace()).unwrap())
            .collect();
        let idf = IdfTable::from_documents(&docs);
        let the = Token::new("the").unwrap();
        let van = Token::new("van").unwrap();
        assert_eq!(idf.weight(&the), 0.0);
        assert!(idf.weight(&van) > 0.0);

        // candidate matches only "the": uniform precision 50, idf precision 0
        let v = ["the", "van", "bus"];
        let c = one_hot(&["the", "bus"], &v);
        let r = one_hot(&["the", "van"], &v);
        assert_eq!(bertscore(&c, &r).unwrap().precision, 50.0);
        assert_eq!(bertscore_idf(&c, &r, &idf).unwrap().precision, 0.0);
    }
}
