//! Retry with exponential backoff and a token-bucket request limiter, shared
//! by every remote client (chat endpoint, embedding and BLEURT providers).

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failure of a single remote call.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    /// Timeouts, connection failures, 429 and 5xx responses.
    #[error("transient: {0}")]
    Transient(String),
    /// Authentication failures, other 4xx responses, malformed payloads.
    #[error("terminal: {0}")]
    Terminal(String),
}

impl RemoteError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, RemoteError::Transient(_))
    }

    /// Classifies an HTTP status code.
    pub fn from_status(status: u16, body: &str) -> Self {
        let msg = format!("HTTP {status}: {}", truncate(body, 200));
        if status == 429 || status == 408 || status >= 500 {
            RemoteError::Transient(msg)
        } else {
            RemoteError::Terminal(msg)
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    #[serde(with = "millis")]
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            backoff_base: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` counts failures so far (≥ 1).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.backoff_base.saturating_mul(factor).min(self.max_backoff)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// Blocking pause, injectable so tests can observe backoff without waiting.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested pauses instead of sleeping.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    calls: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn calls(&self) -> Vec<Duration> {
        self.calls.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.calls.lock().unwrap().push(d);
    }
}

/// Outcome of a retried call plus the number of attempts it took.
#[derive(Debug)]
pub struct Attempted<T> {
    pub result: Result<T, RemoteError>,
    pub attempts: u32,
}

pub fn with_retry<T>(
    policy: &RetryPolicy,
    sleeper: &dyn Sleeper,
    mut call: impl FnMut(u32) -> Result<T, RemoteError>,
) -> Attempted<T> {
    let max = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        match call(attempt) {
            Ok(v) => {
                return Attempted {
                    result: Ok(v),
                    attempts: attempt,
                }
            }
            Err(e) if e.is_retryable() && attempt < max => {
                log::debug!("attempt {attempt} failed ({e}); backing off");
                sleeper.sleep(policy.backoff(attempt));
            }
            Err(e) => {
                return Attempted {
                    result: Err(e),
                    attempts: attempt,
                }
            }
        }
    }
}

/// Monotonic time source for the limiter.
pub trait Clock: Send + Sync {
    fn now(&self) -> Instant;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Instant {
        Instant::now()
    }
}

/// Token bucket limiting requests per minute. Capacity equals the per-minute
/// rate, so a fresh bucket admits one minute's worth of requests at once.
pub struct RateLimiter {
    per_minute: u32,
    state: Mutex<Bucket>,
}

struct Bucket {
    tokens: f64,
    last: Option<Instant>,
}

impl RateLimiter {
    /// `per_minute == 0` disables limiting.
    pub fn new(per_minute: u32) -> Self {
        RateLimiter {
            per_minute,
            state: Mutex::new(Bucket {
                tokens: per_minute as f64,
                last: None,
            }),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0)
    }

    /// Takes one token, returning how long the caller must wait first.
    pub fn reserve(&self, clock: &dyn Clock) -> Duration {
        if self.per_minute == 0 {
            return Duration::ZERO;
        }
        let rate_per_sec = self.per_minute as f64 / 60.0;
        let capacity = self.per_minute as f64;
        let now = clock.now();
        let mut b = self.state.lock().unwrap();
        if let Some(last) = b.last {
            let elapsed = now.saturating_duration_since(last).as_secs_f64();
            b.tokens = (b.tokens + elapsed * rate_per_sec).min(capacity);
        }
        b.last = Some(now);
        b.tokens -= 1.0;
        if b.tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-b.tokens / rate_per_sec)
        }
    }

    pub fn acquire(&self, clock: &dyn Clock, sleeper: &dyn Sleeper) {
        let wait = self.reserve(clock);
        if !wait.is_zero() {
            sleeper.sleep(wait);
        }
    }
}

impl std::fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateLimiter").field("per_minute", &self.per_minute).finish()
    }
}
