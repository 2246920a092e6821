use crate::error::Result;
use crate::metrics::PrfTriple;
use crate::text_norm::{ngrams, Token};

/// ROUGE-N with clipped n-gram overlap. A side with no n-grams gives 0.
pub fn rouge_n(candidate: &[Token], reference: &[Token], n: usize) -> Result<PrfTriple> {
    let c = ngrams(candidate, n)?;
    let r = ngrams(reference, n)?;
    let (ct, rt) = (c.total(), r.total());
    if ct == 0 || rt == 0 {
        return Ok(PrfTriple::ZERO);
    }
    let overlap = c.clipped_overlap(&r) as f64;
    Ok(PrfTriple::from_fractions(overlap / ct as f64, overlap / rt as f64))
}

/// Length of a longest common subsequence, O(|a|·|b|) time and O(min) space.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0usize; short.len() + 1];
    for x in long {
        let mut diag = 0;
        for (j, y) in short.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[short.len()]
}

/// ROUGE-L (β = 1).
pub fn rouge_l(candidate: &[Token], reference: &[Token]) -> PrfTriple {
    if candidate.is_empty() || reference.is_empty() {
        return PrfTriple::ZERO;
    }
    let l = lcs_length(candidate, reference) as f64;
    PrfTriple::from_fractions(l / candidate.len() as f64, l / reference.len() as f64)
}
