//! Embedding and BLEURT provider contracts, local/replay implementations, and
//! a retrying wrapper. Network-backed clients live with the binary.
//!
//! Replay files hold one JSON response object per line, served in request
//! order: `{"vectors": [[...], ...]}` for embeddings and `{"scores": [...]}`
//! for BLEURT.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retry::{with_retry, Clock, RateLimiter, RemoteError, RetryPolicy, Sleeper, SystemClock, ThreadSleeper};
use crate::text_norm::Token;

pub trait EmbeddingProvider: Send + Sync {
    /// One vector per token, same order.
    fn embed(&self, tokens: &[Token]) -> Result<Vec<Vec<f64>>, RemoteError>;
}

pub trait BleurtProvider: Send + Sync {
    /// One score per pair, same order.
    fn score(&self, pairs: &[BleurtPair]) -> Result<Vec<f64>, RemoteError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleurtPair {
    pub candidate: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleurtRequest {
    pub pairs: Vec<BleurtPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleurtResponse {
    pub scores: Vec<f64>,
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<P> {
    fn embed(&self, tokens: &[Token]) -> Result<Vec<Vec<f64>>, RemoteError> {
        (**self).embed(tokens)
    }
}

impl<P: BleurtProvider + ?Sized> BleurtProvider for Arc<P> {
    fn score(&self, pairs: &[BleurtPair]) -> Result<Vec<f64>, RemoteError> {
        (**self).score(pairs)
    }
}

/// Deterministic pseudo-random vector per token type, derived from a hash of
/// the token text. Identical tokens always embed identically; distinct tokens
/// are nearly orthogonal in high dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim: dim.max(1) }
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        // FNV-1a seed, splitmix64 stream
        let mut state = token
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
        let mut v: Vec<f64> = (0..self.dim)
            .map(|_| {
                state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
                let mut z = state;
                z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
                z ^= z >> 31;
                (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(64)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, tokens: &[Token]) -> Result<Vec<Vec<f64>>, RemoteError> {
        Ok(tokens.iter().map(|t| self.vector(t.as_str())).collect())
    }
}

/// Orthonormal one-hot vector per vocabulary entry.
#[derive(Debug, Clone)]
pub struct OneHotEmbedder {
    index: HashMap<Token, usize>,
}

impl OneHotEmbedder {
    pub fn new<I: IntoIterator<Item = Token>>(vocab: I) -> Self {
        let mut index = HashMap::new();
        for t in vocab {
            let next = index.len();
            index.entry(t).or_insert(next);
        }
        OneHotEmbedder { index }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }
}

impl EmbeddingProvider for OneHotEmbedder {
    fn embed(&self, tokens: &[Token]) -> Result<Vec<Vec<f64>>, RemoteError> {
        tokens
            .iter()
            .map(|t| {
                let i = *self
                    .index
                    .get(t)
                    .ok_or_else(|| RemoteError::Terminal(format!("token {t:?} outside one-hot vocabulary")))?;
                let mut v = vec![0.0; self.index.len()];
                v[i] = 1.0;
                Ok(v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantBleurt(pub f64);

impl BleurtProvider for ConstantBleurt {
    fn score(&self, pairs: &[BleurtPair]) -> Result<Vec<f64>, RemoteError> {
        Ok(vec![self.0; pairs.len()])
    }
}

fn read_replay<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                location: crate::error::Location::Line(i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Serves recorded responses in order; running out is a terminal error.
#[derive(Debug)]
pub struct Replay<T> {
    responses: Vec<T>,
    cursor: Mutex<usize>,
}

impl<T: Clone> Replay<T> {
    pub fn new(responses: Vec<T>) -> Self {
        Replay {
            responses,
            cursor: Mutex::new(0),
        }
    }

    fn next(&self) -> Result<T, RemoteError> {
        let mut c = self.cursor.lock().unwrap();
        let r = self
            .responses
            .get(*c)
            .cloned()
            .ok_or_else(|| RemoteError::Terminal(format!("replay exhausted after {} responses", self.responses.len())))?;
        *c += 1;
        Ok(r)
    }
}

pub type ReplayEmbedder = Replay<EmbedResponse>;
pub type ReplayBleurt = Replay<BleurtResponse>;

impl ReplayEmbedder {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        read_replay(path.as_ref()).map(Replay::new)
    }
}

impl ReplayBleurt {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        read_replay(path.as_ref()).map(Replay::new)
    }
}

impl EmbeddingProvider for ReplayEmbedder {
    fn embed(&self, tokens: &[Token]) -> Result<Vec<Vec<f64>>, RemoteError> {
        let r = self.next()?;
        if r.vectors.len() != tokens.len() {
            return Err(RemoteError::Terminal(format!(
                "replayed {} vectors for {} tokens",
                r.vectors.len(),
                tokens.len()
            )));
        }
        Ok(r.vectors)
    }
}

impl BleurtProvider for ReplayBleurt {
    fn score(&self, pairs: &[BleurtPair]) -> Result<Vec<f64>, RemoteError> {
        let r = self.next()?;
        if r.scores.len() != pairs.len() {
            return Err(RemoteError::Terminal(format!(
                "replayed {} scores for {} pairs",
                r.scores.len(),
                pairs.len()
            )));
        }
        Ok(r.scores)
    }
}

/// Adds retry, backoff and rate limiting in front of any provider.
pub struct Retrying<P> {
    inner: P,
    policy: RetryPolicy,
    limiter: RateLimiter,
    sleeper: Arc<dyn Sleeper>,
    clock: Arc<dyn Clock>,
}

impl<P> Retrying<P> {
    pub fn new(inner: P, policy: RetryPolicy, requests_per_minute: u32) -> Self {
        Retrying {
            inner,
            policy,
            limiter: RateLimiter::new(requests_per_minute),
            sleeper: Arc::new(ThreadSleeper),
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    fn run<T>(&self, mut f: impl FnMut() -> Result<T, RemoteError>) -> Result<T, RemoteError> {
        with_retry(&self.policy, self.sleeper.as_ref(), |_| {
            self.limiter.acquire(self.clock.as_ref(), self.sleeper.as_ref());
            f()
        })
        .result
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for Retrying<P> {
    fn embed(&self, tokens: &[Token]) -> Result<Vec<Vec<f64>>, RemoteError> {
        self.run(|| self.inner.embed(tokens))
    }
}

impl<P: BleurtProvider> BleurtProvider for Retrying<P> {
    fn score(&self, pairs: &[BleurtPair]) -> Result<Vec<f64>, RemoteError> {
        self.run(|| self.inner.score(pairs))
    }
}
