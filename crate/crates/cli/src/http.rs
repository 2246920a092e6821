//! Blocking HTTP clients for the chat, embedding and BLEURT services.

use std::fmt;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use safetune::generate::endpoint::{CallContext, ChatEndpoint, ChatRequest, ChatResponse};
use safetune::metrics::providers::{BleurtRequest, BleurtResponse, EmbedRequest, EmbedResponse};
use safetune::metrics::{BleurtPair, BleurtProvider, EmbeddingProvider};
use safetune::retry::RemoteError;
use safetune::text_norm::Token;

/// A bearer token. Never printed.
#[derive(Clone)]
pub struct Secret(String);

impl Secret {
    /// Reads the token from the named environment variable.
    pub fn from_env(var: &str) -> anyhow::Result<Secret> {
        match std::env::var(var) {
            Ok(v) if !v.trim().is_empty() => Ok(Secret(v.trim().to_owned())),
            _ => anyhow::bail!("environment variable {var} is not set or empty"),
        }
    }

    fn header(&self) -> String {
        format!("Bearer {}", self.0)
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    url: String,
    token: Option<Secret>,
}

impl JsonClient {
    pub fn new(url: impl Into<String>, token: Option<Secret>, timeout: Duration) -> Self {
        JsonClient {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            url: url.into(),
            token,
        }
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, RemoteError> {
        let mut req = self.agent.post(&self.url).set("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.set("Authorization", &t.header());
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<Resp>()
                .map_err(|e| RemoteError::Terminal(format!("malformed response from {}: {e}", self.url))),
            Err(ureq::Error::Status(code, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                Err(RemoteError::from_status(code, &body))
            }
            Err(ureq::Error::Transport(t)) => Err(RemoteError::Transient(format!("{}: {t}", self.url))),
        }
    }
}

/// Chat-completions client: POSTs to `{base_url}/chat/completions`.
#[derive(Debug)]
pub struct HttpChat(pub JsonClient);

impl HttpChat {
    pub fn new(base_url: &str, token: Secret, timeout: Duration) -> Self {
        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        HttpChat(JsonClient::new(url, Some(token), timeout))
    }
}

impl ChatEndpoint for HttpChat {
    fn complete(&self, request: &ChatRequest, ctx: CallContext) -> Result<String, RemoteError> {
        log::debug!("chat request {} attempt {}", ctx.index, ctx.attempt);
        self.0.post::<_, ChatResponse>(request)?.into_text()
    }
}

/// Embedding service: `{"tokens": [...]}` in, `{"vectors": [[...], ...]}` out.
#[derive(Debug)]
pub struct HttpEmbedder(pub JsonClient);

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, tokens: &[Token]) -> Result<Vec<Vec<f64>>, RemoteError> {
        let req = EmbedRequest {
            tokens: tokens.iter().map(|t| t.as_str().to_owned()).collect(),
        };
        let resp: EmbedResponse = self.0.post(&req)?;
        if resp.vectors.len() != tokens.len() {
            return Err(RemoteError::Terminal(format!(
                "embedding service returned {} vectors for {} tokens",
                resp.vectors.len(),
                tokens.len()
            )));
        }
        Ok(resp.vectors)
    }
}

/// BLEURT service: `{"pairs": [{candidate, reference}]}` in, `{"scores": [...]}` out.
#[derive(Debug)]
pub struct HttpBleurt(pub JsonClient);

impl BleurtProvider for HttpBleurt {
    fn score(&self, pairs: &[BleurtPair]) -> Result<Vec<f64>, RemoteError> {
        let resp: BleurtResponse = self.0.post(&BleurtRequest { pairs: pairs.to_vec() })?;
        if resp.scores.len() != pairs.len() {
            return Err(RemoteError::Terminal(format!(
                "BLEURT service returned {} scores for {} pairs",
                resp.scores.len(),
                pairs.len()
            )));
        }
        Ok(resp.scores)
    }
}
