use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use safetune::generate::{ChatEndpointConfig, GenerationConfig};
use safetune::metrics::MetricConfig;
use safetune::retry::RetryPolicy;
use safetune::train_plan::FreezePolicy;

/// A scoring service reached over HTTP (embeddings or BLEURT).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub url: String,
    /// Environment variable holding a bearer token, if the service needs one.
    pub token_env: Option<String>,
    pub timeout_secs: u64,
    pub requests_per_minute: u32,
    pub retry: RetryPolicy,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            url: String::new(),
            token_env: None,
            timeout_secs: 60,
            requests_per_minute: 0,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlanConfig {
    pub freeze: FreezePolicy,
    /// Hyperparameter overrides applied on top of the defaults.
    pub overrides: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub strict_missing: bool,
    /// Temperature used when collecting answers from a chat endpoint.
    pub temperature: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            strict_missing: false,
            temperature: 0.0,
        }
    }
}

/// Everything read from `--config`. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub chat: ChatEndpointConfig,
    pub generation: GenerationConfig,
    pub metrics: MetricConfig,
    /// Remote embedding service; the built-in hashed embedder is used when absent.
    pub embedding: Option<ServiceConfig>,
    pub bleurt: Option<ServiceConfig>,
    pub split: SplitConfig,
    pub trainplan: TrainPlanConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }
}
