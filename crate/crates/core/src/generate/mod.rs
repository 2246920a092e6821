//! Self-instruct expansion of a human-labeled seed set.
//!
//! Each request samples `seed_count` seeds, renders them into a few-shot
//! prompt, and asks the chat endpoint for new triples in the same layout.
//! Replies are parsed and passed through the novelty filter strictly in
//! request-index order, so a deterministic endpoint yields identical output
//! regardless of how many requests run concurrently.

pub mod dedup;
pub mod endpoint;
pub mod parse;
pub mod prompt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dedup::{dedup_filter, DedupOutcome, DedupPool};
pub use endpoint::{ChatEndpoint, ChatEndpointConfig, ChatMessage, ChatRequest, Dispatcher};
pub use parse::{parse_generations, CandidateRecord, ParsedGenerations};
pub use prompt::{build_prompt, DEFAULT_DIRECTIVE};

use crate::dataset::{content_id, InstructionRecord, Provenance, SourceTag};
use crate::retry::{RemoteError, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// In-context seeds per prompt.
    pub seed_count: usize,
    pub target_count: usize,
    /// Total requests allowed before giving up.
    pub max_requests: usize,
    pub temperature: f64,
    pub max_in_flight: usize,
    /// ROUGE-L F1 (0–100) at or above which a candidate counts as a duplicate.
    pub dedup_threshold: f64,
    pub retry: RetryPolicy,
    /// Seeds the per-request choice of in-context examples.
    pub seed: u64,
    pub directive: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            seed_count: 3,
            target_count: 100,
            max_requests: 200,
            temperature: 1.0,
            max_in_flight: 4,
            dedup_threshold: 70.0,
            retry: RetryPolicy::default(),
            seed: 0,
            directive: DEFAULT_DIRECTIVE.to_owned(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.seed_count < 1 {
            return Err("seed_count must be at least 1".into());
        }
        if self.target_count < 1 {
            return Err("target_count must be at least 1".into());
        }
        if self.max_requests < 1 {
            return Err("max_requests must be at least 1".into());
        }
        if self.max_in_flight < 1 {
            return Err("max_in_flight must be at least 1".into());
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 100.0) {
            return Err(format!("dedup_threshold {} outside (0, 100]", self.dedup_threshold));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature {} must be a non-negative number", self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GenerationStats {
    pub requests: usize,
    pub candidates: usize,
    pub accepted: usize,
    pub rejected_duplicates: usize,
    pub dropped_blocks: usize,
    pub empty_replies: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub records: Vec<InstructionRecord>,
    pub stats: GenerationStats,
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("request budget exhausted with {} of {target} records accepted", .accepted.len())]
    BudgetExhausted {
        accepted: Vec<InstructionRecord>,
        target: usize,
        stats: GenerationStats,
    },
    #[error("endpoint failed at request {index}: {source}")]
    Endpoint {
        index: usize,
        accepted: Vec<InstructionRecord>,
        stats: GenerationStats,
        #[source]
        source: RemoteError,
    },
}

impl GenerateError {
    /// Records accepted before the failure.
    pub fn partial(&self) -> &[InstructionRecord] {
        match self {
            GenerateError::InvalidArgument(_) => &[],
            GenerateError::BudgetExhausted { accepted, .. } | GenerateError::Endpoint { accepted, .. } => accepted,
        }
    }
}

fn request_for(seeds: &[InstructionRecord], config: &GenerationConfig, model: &str, index: usize) -> (ChatRequest, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let chosen: Vec<InstructionRecord> = seeds.choose_multiple(&mut rng, config.seed_count).cloned().collect();
    let first = seeds.iter().position(|s| s.id == chosen[0].id).unwrap_or(0);
    let prompt = build_prompt(&chosen, config.seed_count, &config.directive).expect("seed_count checked against seeds");
    let request = ChatRequest {
        model: model.to_owned(),
        messages: vec![ChatMessage::system(prompt::SYSTEM_MESSAGE), ChatMessage::user(prompt)],
        temperature: config.temperature,
    };
    (request, first)
}

/// Expands `seeds` until `target_count` novel records are accepted or the
/// request budget runs out.
pub fn generate_dataset(
    seeds: &[InstructionRecord],
    config: &GenerationConfig,
    model: &str,
    dispatcher: &Dispatcher,
) -> Result<GenerationOutcome, GenerateError> {
    config.validate().map_err(GenerateError::InvalidArgument)?;
    if seeds.is_empty() {
        return Err(GenerateError::InvalidArgument("seed set is empty".into()));
    }
    if config.seed_count > seeds.len() {
        return Err(GenerateError::InvalidArgument(format!(
            "seed_count {} exceeds the {} available seeds",
            config.seed_count,
            seeds.len()
        )));
    }

    let mut pool = DedupPool::from_records(seeds);
    let mut accepted: Vec<InstructionRecord> = Vec::new();
    let mut stats = GenerationStats::default();
    let mut next = 0;
    let batch = config.max_in_flight.min(dispatcher.max_in_flight());

    while accepted.len() < config.target_count && next < config.max_requests {
        let n = batch.min(config.max_requests - next);
        let (requests, defaults): (Vec<_>, Vec<_>) = (next..next + n)
            .map(|i| request_for(seeds, config, model, i))
            .unzip();
        let results = dispatcher.dispatch(next, &requests);
        for (offset, result) in results.into_iter().enumerate() {
            let index = next + offset;
            stats.requests += 1;
            let text = match result.result {
                Ok(t) => t,
                Err(source) => {
                    log::error!("request {index} failed after {} attempt(s): {source}", result.attempts);
                    return Err(GenerateError::Endpoint {
                        index,
                        accepted,
                        stats,
                        source,
                    });
                }
            };
            let parsed = parse_generations(&text);
            stats.dropped_blocks += parsed.dropped;
            if let Some(d) = &parsed.diagnostic {
                stats.empty_replies += 1;
                log::warn!("request {index}: {d}");
            }
            for c in parsed.candidates {
                stats.candidates += 1;
                if !pool.admit(&c.input, config.dedup_threshold) {
                    stats.rejected_duplicates += 1;
                    continue;
                }
                let task_type = c.task_type.unwrap_or(seeds[defaults[offset]].task_type);
                accepted.push(InstructionRecord {
                    id: content_id("gen", &[&c.instruction, &c.input, &c.output]),
                    instruction: c.instruction,
                    input: c.input,
                    output: c.output,
                    task_type,
                    source: SourceTag::Generated,
                    provenance: Provenance::ModelGenerated,
                });
                if accepted.len() == config.target_count {
                    break;
                }
            }
            if accepted.len() == config.target_count {
                break;
            }
        }
        next += n;
    }

    stats.accepted = accepted.len();
    log::info!(
        "generation finished: {} accepted, {} duplicates rejected, {} requests",
        stats.accepted,
        stats.rejected_duplicates,
        stats.requests
    );
    if accepted.len() < config.target_count {
        return Err(GenerateError::BudgetExhausted {
            accepted,
            target: config.target_count,
            stats,
        });
    }
    Ok(GenerationOutcome { records: accepted, stats })
}
