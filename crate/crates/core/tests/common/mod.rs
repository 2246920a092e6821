//! Brute-force reference implementations and fixture helpers shared by the
//! integration tests. Nothing here calls into the metric code under test.
#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;

use safetune::metrics::{BleurtPair, BleurtProvider};
use safetune::retry::RemoteError;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Every sequence over `0..alphabet` with length `0..=max_len`.
pub fn all_sequences(alphabet: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for a in 0..alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Occurrences of `gram` in `seq` by sliding comparison.
pub fn occurrences<T: PartialEq>(seq: &[T], gram: &[T]) -> usize {
    if gram.is_empty() || gram.len() > seq.len() {
        return 0;
    }
    (0..=seq.len() - gram.len()).filter(|&i| &seq[i..i + gram.len()] == gram).count()
}

/// Clipped n-gram overlap and candidate n-gram total, by enumeration.
pub fn clipped<T: PartialEq>(cand: &[T], refr: &[T], n: usize) -> (usize, usize) {
    if cand.len() < n {
        return (0, 0);
    }
    let windows: Vec<&[T]> = (0..=cand.len() - n).map(|i| &cand[i..i + n]).collect();
    let mut overlap = 0;
    for (i, g) in windows.iter().enumerate() {
        if windows[..i].contains(g) {
            continue;
        }
        overlap += occurrences(cand, g).min(occurrences(refr, g));
    }
    (overlap, windows.len())
}

/// Unsmoothed BLEU over orders `1..=min(max_n, |c|)`, on a 0-100 scale.
pub fn bleu_oracle<T: PartialEq>(cand: &[T], refr: &[T], max_n: usize) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let order = max_n.min(cand.len());
    let mut product = 1.0f64;
    for n in 1..=order {
        let (hit, total) = clipped(cand, refr, n);
        if hit == 0 {
            return 0.0;
        }
        product *= hit as f64 / total as f64;
    }
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    100.0 * bp * product.powf(1.0 / order as f64)
}

/// (precision, recall, f1) on a 0-100 scale for a ROUGE-N style overlap.
pub fn prf(overlap: usize, cand_total: usize, ref_total: usize) -> (f64, f64, f64) {
    if cand_total == 0 || ref_total == 0 || overlap == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    (100.0 * p, 100.0 * r, 100.0 * 2.0 * p * r / (p + r))
}

pub fn rouge_n_oracle<T: PartialEq>(cand: &[T], refr: &[T], n: usize) -> (f64, f64, f64) {
    let (hit, ct) = clipped(cand, refr, n);
    let rt = refr.len().saturating_sub(n - 1);
    prf(hit, ct, rt)
}

/// Every subsequence of `s` (encoded with its length), by bitmask enumeration.
pub fn subsequences(s: &[u8]) -> HashSet<Vec<u8>> {
    (0u32..1 << s.len())
        .map(|mask| (0..s.len()).filter(|i| mask & (1 << i) != 0).map(|i| s[i]).collect())
        .collect()
}

/// Subsequences as `length << 24 | base-4 code`, longest first. Symbols must
/// be below 3 and sequences at most 8 long.
pub fn subsequence_keys(s: &[u8]) -> Vec<u32> {
    let mut keys: Vec<u32> = subsequences(s)
        .iter()
        .map(|t| (t.len() as u32) << 24 | t.iter().fold(0u32, |acc, &c| acc * 4 + c as u32 + 1))
        .collect();
    keys.sort_unstable_by(|a, b| b.cmp(a));
    keys
}

/// LCS length from precomputed keys: the longest key of `a` also in `b`.
pub fn lcs_from_keys(a: &[u32], b: &HashSet<u32>) -> usize {
    a.iter().find(|k| b.contains(k)).map_or(0, |k| (k >> 24) as usize)
}

/// Longest common subsequence by intersecting subsequence sets.
pub fn lcs_oracle(a: &[u8], b: &[u8]) -> usize {
    let sa = subsequences(a);
    let sb = subsequences(b);
    sa.intersection(&sb).map(Vec::len).max().unwrap_or(0)
}

/// Stand-in learned scorer for tests: Jaccard overlap of lowercase word sets,
/// ×100.
pub struct JaccardBleurt;

impl BleurtProvider for JaccardBleurt {
    fn score(&self, pairs: &[BleurtPair]) -> Result<Vec<f64>, RemoteError> {
        Ok(pairs
            .iter()
            .map(|p| {
                let words = |s: &str| -> HashSet<String> { s.split_whitespace().map(str::to_lowercase).collect() };
                let (c, r) = (words(&p.candidate), words(&p.reference));
                let union = c.union(&r).count();
                if union == 0 {
                    0.0
                } else {
                    100.0 * c.intersection(&r).count() as f64 / union as f64
                }
            })
            .collect())
    }
}
