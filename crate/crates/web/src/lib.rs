//! Browser bindings: each export takes plain values and returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use safetune::metrics::providers::HashEmbedder;
use safetune::metrics::{score_pair, MetricConfig};
use safetune::text_norm::{tokenize, NormalizationConfig};
use safetune::train_plan::{emit_config, plan_freeze, FreezePlan, FreezePolicy, LayerManifest, TrainConfig};

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("demo values always serialize")
}

/// All metrics for one candidate/reference pair, BERTScore via the hashed embedder.
#[wasm_bindgen]
pub fn score_texts(candidate: &str, reference: &str) -> Result<String, String> {
    score_pair(candidate, reference, &MetricConfig::default(), &HashEmbedder::default(), None)
        .map(|s| json(&s))
        .map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct Alignment {
    candidate: Vec<String>,
    reference: Vec<String>,
    /// Matched (candidate index, reference index) pairs, in order.
    pairs: Vec<(usize, usize)>,
}

/// One longest common subsequence of the normalized token streams.
#[wasm_bindgen]
pub fn lcs_alignment(candidate: &str, reference: &str) -> String {
    let norm = NormalizationConfig::default();
    let a: Vec<String> = tokenize(candidate, &norm).iter().map(|t| t.as_str().to_owned()).collect();
    let b: Vec<String> = tokenize(reference, &norm).iter().map(|t| t.as_str().to_owned()).collect();
    // suffix table so the walk can go forwards
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in (0..a.len()).rev() {
        for j in (0..b.len()).rev() {
            t[i][j] = if a[i] == b[j] { t[i + 1][j + 1] + 1 } else { t[i + 1][j].max(t[i][j + 1]) };
        }
    }
    let (mut i, mut j, mut pairs) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if t[i + 1][j] >= t[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    json(&Alignment {
        candidate: a,
        reference: b,
        pairs,
    })
}

#[derive(Debug, Serialize)]
struct PlanView {
    plan: FreezePlan,
    config: TrainConfig,
}

/// Freeze plan and default training configuration for a synthetic decoder.
#[wasm_bindgen]
pub fn freeze_plan(blocks: usize, last_n_blocks: usize, include_head: bool, final_norm: bool) -> Result<String, String> {
    let manifest = LayerManifest::synthetic_decoder(blocks, final_norm);
    let policy = FreezePolicy {
        last_n_blocks,
        include_head,
        include_final_norm: final_norm,
    };
    let plan = plan_freeze(&manifest, &policy).map_err(|e| e.to_string())?;
    let config = emit_config(&plan, &Default::default()).map_err(|e| e.to_string())?;
    Ok(json(&PlanView { plan, config }))
}
