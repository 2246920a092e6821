//! Chat-completion contract, mock/replay endpoints, and a dispatcher that runs
//! bounded batches of requests with retry and rate limiting.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};
use crate::retry::{with_retry, Attempted, Clock, RateLimiter, RemoteError, RetryPolicy, Sleeper, SystemClock, ThreadSleeper};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Request body in the widely used chat-completions shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatChoice {
    pub message: ChatMessage,
}

impl ChatResponse {
    pub fn into_text(self) -> Result<String, RemoteError> {
        self.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| RemoteError::Terminal("response carried no choices".into()))
    }
}

/// Where and how to reach a hosted chat model. The auth token itself is never
/// stored; only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatEndpointConfig {
    pub base_url: String,
    pub model: String,
    pub token_env: String,
    pub timeout_secs: u64,
    pub requests_per_minute: u32,
}

impl Default for ChatEndpointConfig {
    fn default() -> Self {
        ChatEndpointConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            token_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            requests_per_minute: 60,
        }
    }
}

/// Identifies a call for deterministic mocks: the logical request index and the
/// 1-based attempt number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallContext {
    pub index: usize,
    pub attempt: u32,
}

pub trait ChatEndpoint: Send + Sync {
    fn complete(&self, request: &ChatRequest, ctx: CallContext) -> Result<String, RemoteError>;
}

/// Endpoint backed by a closure, for tests and demos.
pub struct ScriptedEndpoint<F>(pub F);

impl<F> ChatEndpoint for ScriptedEndpoint<F>
where
    F: Fn(&ChatRequest, CallContext) -> Result<String, RemoteError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest, ctx: CallContext) -> Result<String, RemoteError> {
        (self.0)(request, ctx)
    }
}

/// One recorded reply in a replay file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReplayEntry {
    Content { content: String },
    Failure { error: ReplayFailure, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayFailure {
    Transient,
    Terminal,
}

/// Replays canned replies from a file with one JSON object per line, either
/// `{"content": "..."}` or `{"error": "transient"|"terminal", "message": "..."}`.
/// Request `i` receives entry `i mod len`, so output does not depend on thread
/// scheduling.
#[derive(Debug, Clone)]
pub struct ReplayEndpoint {
    entries: Vec<ReplayEntry>,
}

impl ReplayEndpoint {
    pub fn new(entries: Vec<ReplayEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("replay endpoint needs at least one entry"));
        }
        Ok(ReplayEndpoint { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    location: Location::Line(i + 1),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

impl ChatEndpoint for ReplayEndpoint {
    fn complete(&self, _request: &ChatRequest, ctx: CallContext) -> Result<String, RemoteError> {
        match &self.entries[ctx.index % self.entries.len()] {
            ReplayEntry::Content { content } => Ok(content.clone()),
            ReplayEntry::Failure {
                error: ReplayFailure::Transient,
                message,
            } => Err(RemoteError::Transient(message.clone())),
            ReplayEntry::Failure {
                error: ReplayFailure::Terminal,
                message,
            } => Err(RemoteError::Terminal(message.clone())),
        }
    }
}

/// Runs requests against an endpoint with at most `max_in_flight` outstanding,
/// each retried per policy and admitted through a shared rate limiter.
pub struct Dispatcher {
    endpoint: Arc<dyn ChatEndpoint>,
    policy: RetryPolicy,
    limiter: RateLimiter,
    max_in_flight: usize,
    sleeper: Arc<dyn Sleeper>,
    clock: Arc<dyn Clock>,
}

impl Dispatcher {
    pub fn new(endpoint: Arc<dyn ChatEndpoint>, policy: RetryPolicy, max_in_flight: usize, requests_per_minute: u32) -> Self {
        Dispatcher {
            endpoint,
            policy,
            limiter: RateLimiter::new(requests_per_minute),
            max_in_flight: max_in_flight.max(1),
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

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn call(&self, index: usize, request: &ChatRequest) -> Attempted<String> {
        let out = with_retry(&self.policy, self.sleeper.as_ref(), |attempt| {
            self.limiter.acquire(self.clock.as_ref(), self.sleeper.as_ref());
            self.endpoint.complete(request, CallContext { index, attempt })
        });
        if out.attempts > 1 {
            log::info!("request {index} finished after {} attempts", out.attempts);
        }
        out
    }

    /// Sends `requests` (logical indices starting at `first_index`) and returns
    /// results in request order.
    pub fn dispatch(&self, first_index: usize, requests: &[ChatRequest]) -> Vec<Attempted<String>> {
        let mut results = Vec::with_capacity(requests.len());
        for (chunk_no, chunk) in requests.chunks(self.max_in_flight).enumerate() {
            let base = first_index + chunk_no * self.max_in_flight;
            if chunk.len() == 1 {
                results.push(self.call(base, &chunk[0]));
                continue;
            }
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .enumerate()
                    .map(|(j, req)| s.spawn(move || self.call(base + j, req)))
                    .collect();
                for h in handles {
                    results.push(h.join().expect("request thread panicked"));
                }
            });
        }
        results
    }
}

impl std::fmt::Debug for Dispatcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dispatcher")
            .field("policy", &self.policy)
            .field("limiter", &self.limiter)
            .field("max_in_flight", &self.max_in_flight)
            .finish_non_exhaustive()
    }
}
