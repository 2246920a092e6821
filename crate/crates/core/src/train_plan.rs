//! Fine-tuning plan: which layers train, the training hyperparameters, and a
//! post-training check that frozen layers were left untouched.
//!
//! Layers are described by a manifest (one line per layer: `name kind
//! param_count sha256-hex`) produced by an external trainer; weights are never
//! read here.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Embedding,
    Block,
    Norm,
    Head,
}

impl LayerKind {
    pub fn label(self) -> &'static str {
        match self {
            LayerKind::Embedding => "embedding",
            LayerKind::Block => "block",
            LayerKind::Norm => "norm",
            LayerKind::Head => "head",
        }
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "embedding" => Ok(LayerKind::Embedding),
            "block" => Ok(LayerKind::Block),
            "norm" => Ok(LayerKind::Norm),
            "head" => Ok(LayerKind::Head),
            other => Err(Error::invalid(format!("unknown layer kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub kind: LayerKind,
    pub param_count: u64,
    /// Lowercase hex SHA-256 of the layer's serialized parameters.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerManifest {
    entries: Vec<LayerEntry>,
}

pub fn checksum_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn valid_checksum(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

impl LayerManifest {
    pub fn new(entries: Vec<LayerEntry>) -> Result<Self> {
        let mut names = HashSet::new();
        for e in &entries {
            if e.name.is_empty() || e.name.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid layer name {:?}", e.name)));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::invalid(format!("duplicate layer name {:?}", e.name)));
            }
            if !valid_checksum(&e.checksum) {
                return Err(Error::invalid(format!("layer {:?} checksum is not 64 hex digits", e.name)));
            }
        }
        let first_non_embedding = entries.iter().position(|e| e.kind != LayerKind::Embedding);
        if let Some(i) = first_non_embedding {
            if entries[i..].iter().any(|e| e.kind == LayerKind::Embedding) {
                return Err(Error::invalid("embedding layers must come first"));
            }
        }
        if let Some(i) = entries.iter().position(|e| e.kind == LayerKind::Head) {
            if entries[i..].iter().any(|e| e.kind != LayerKind::Head) {
                return Err(Error::invalid("head layers must come last"));
            }
        }
        Ok(LayerManifest { entries })
    }

    /// Decoder-only layout: `embed`, `block.0` … `block.{n-1}`, `norm`, `lm_head`.
    /// Checksums are digests of the layer names.
    pub fn synthetic_decoder(blocks: usize, with_final_norm: bool) -> Self {
        let entry = |name: String, kind, param_count| LayerEntry {
            checksum: checksum_hex(name.as_bytes()),
            name,
            kind,
            param_count,
        };
        let mut entries = vec![entry("embed".into(), LayerKind::Embedding, 131_072_000)];
        entries.extend((0..blocks).map(|i| entry(format!("block.{i}"), LayerKind::Block, 202_383_360)));
        if with_final_norm {
            entries.push(entry("norm".into(), LayerKind::Norm, 4096));
        }
        entries.push(entry("lm_head".into(), LayerKind::Head, 131_072_000));
        LayerManifest { entries }
    }

    pub fn entries(&self) -> &[LayerEntry] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::Parse {
                location: Location::Line(i + 1),
                message: m,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, kind, params, checksum] = fields[..] else {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            };
            entries.push(LayerEntry {
                name: name.to_owned(),
                kind: kind.parse().map_err(|e: Error| err(e.to_string()))?,
                param_count: params.parse().map_err(|_| err(format!("bad param_count {params:?}")))?,
                checksum: checksum.to_ascii_lowercase(),
            });
        }
        LayerManifest::new(entries)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\t{}\n", e.name, e.kind.label(), e.param_count, e.checksum))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreezePolicy {
    /// Number of trailing transformer blocks left trainable.
    pub last_n_blocks: usize,
    pub include_head: bool,
    pub include_final_norm: bool,
}

impl Default for FreezePolicy {
    fn default() -> Self {
        FreezePolicy {
            last_n_blocks: 2,
            include_head: false,
            include_final_norm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezePlan {
    pub trainable: Vec<String>,
    pub frozen: Vec<String>,
    pub trainable_param_count: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn plan_freeze(manifest: &LayerManifest, policy: &FreezePolicy) -> Result<FreezePlan> {
    if policy.last_n_blocks < 1 {
        return Err(Error::invalid("freeze policy must keep at least one block trainable"));
    }
    if manifest.is_empty() {
        return Err(Error::invalid("layer manifest is empty"));
    }
    let blocks: Vec<usize> = manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == LayerKind::Block)
        .map(|(i, _)| i)
        .collect();
    let Some(&last_block) = blocks.last() else {
        return Err(Error::invalid("layer manifest has no block entries"));
    };

    let mut warnings = Vec::new();
    if blocks.len() < policy.last_n_blocks {
        warnings.push(format!(
            "policy asks for the last {} blocks but the manifest has only {}; all blocks are trainable",
            policy.last_n_blocks,
            blocks.len()
        ));
    }
    let mut train = vec![false; manifest.len()];
    for &i in blocks.iter().rev().take(policy.last_n_blocks) {
        train[i] = true;
    }
    for (i, e) in manifest.entries.iter().enumerate() {
        match e.kind {
            LayerKind::Head if policy.include_head => train[i] = true,
            LayerKind::Norm if policy.include_final_norm && i > last_block => train[i] = true,
            _ => {}
        }
    }

    let mut plan = FreezePlan {
        trainable: Vec::new(),
        frozen: Vec::new(),
        trainable_param_count: 0,
        warnings,
    };
    for (e, t) in manifest.entries.iter().zip(train) {
        if t {
            plan.trainable.push(e.name.clone());
            plan.trainable_param_count += e.param_count;
        } else {
            plan.frozen.push(e.name.clone());
        }
    }
    Ok(plan)
}

/// Training hyperparameters plus the layer partition, in serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: u32,
    pub learning_rate: f64,
    pub epochs: u32,
    pub max_sequence_length: u32,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub trainable_layers: Vec<String>,
    pub frozen_layers: Vec<String>,
}

impl TrainConfig {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config always serializes");
        s.push('\n');
        s
    }
}

fn positive_int(field: &str, v: &Value) -> Result<u32> {
    v.as_u64()
        .filter(|n| *n >= 1 && *n <= u32::MAX as u64)
        .map(|n| n as u32)
        .ok_or_else(|| Error::invalid(format!("{field} must be a positive integer, got {v}")))
}

fn real(field: &str, v: &Value, allow_zero: bool) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite() && (*x > 0.0 || (allow_zero && *x == 0.0)))
        .ok_or_else(|| {
            let bound = if allow_zero { "non-negative" } else { "positive" };
            Error::invalid(format!("{field} must be a {bound} number, got {v}"))
        })
}

/// Builds the training configuration: batch 16, learning rate 2e-5, 3 epochs,
/// 152-token sequences, warm-up ratio 0.03, no weight decay, unless overridden.
pub fn emit_config(plan: &FreezePlan, overrides: &BTreeMap<String, Value>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        batch_size: 16,
        learning_rate: 2e-5,
        epochs: 3,
        max_sequence_length: 152,
        warmup_ratio: 0.03,
        weight_decay: 0.0,
        trainable_layers: plan.trainable.clone(),
        frozen_layers: plan.frozen.clone(),
    };
    for (field, v) in overrides {
        match field.as_str() {
            "batch_size" => cfg.batch_size = positive_int(field, v)?,
            "epochs" => cfg.epochs = positive_int(field, v)?,
            "max_sequence_length" => cfg.max_sequence_length = positive_int(field, v)?,
            "learning_rate" => cfg.learning_rate = real(field, v, false)?,
            "warmup_ratio" => cfg.warmup_ratio = real(field, v, false)?,
            "weight_decay" => cfg.weight_decay = real(field, v, true)?,
            "trainable_layers" | "frozen_layers" => {
                return Err(Error::invalid(format!("{field} is derived from the freeze plan and cannot be overridden")))
            }
            other => return Err(Error::invalid(format!("unknown config field {other:?}"))),
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FreezeStatus {
    Pass,
    /// No trainable layer changed; training had no effect.
    Warn,
    /// A frozen layer changed.
    Fail,
}

impl fmt::Display for FreezeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreezeStatus::Pass => "PASS",
            FreezeStatus::Warn => "WARN",
            FreezeStatus::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeReport {
    pub status: FreezeStatus,
    pub changed_frozen: Vec<String>,
    pub changed_trainable: Vec<String>,
}

pub fn verify_freeze(before: &LayerManifest, after: &LayerManifest, plan: &FreezePlan) -> Result<FreezeReport> {
    if !before.names().eq(after.names()) {
        return Err(Error::invalid("before/after manifests list different layers"));
    }
    let trainable: HashSet<&str> = plan.trainable.iter().map(String::as_str).collect();
    let planned: HashSet<&str> = trainable.iter().copied().chain(plan.frozen.iter().map(String::as_str)).collect();
    if planned.len() != before.len() || !before.names().all(|n| planned.contains(n)) {
        return Err(Error::invalid("freeze plan does not cover the manifest's layers"));
    }

    let mut report = FreezeReport {
        status: FreezeStatus::Pass,
        changed_frozen: Vec::new(),
        changed_trainable: Vec::new(),
    };
    for (b, a) in before.entries.iter().zip(&after.entries) {
        if b.checksum != a.checksum {
            if trainable.contains(b.name.as_str()) {
                report.changed_trainable.push(b.name.clone());
            } else {
                report.changed_frozen.push(b.name.clone());
            }
        }
    }
    report.status = if !report.changed_frozen.is_empty() {
        FreezeStatus::Fail
    } else if report.changed_trainable.is_empty() {
        FreezeStatus::Warn
    } else {
        FreezeStatus::Pass
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mutate(m: &LayerManifest, name: &str) -> LayerManifest {
        let mut entries = m.entries().to_vec();
        let e = entries.iter_mut().find(|e| e.name == name).unwrap();
        e.checksum = checksum_hex(format!("{}-trained", e.name).as_bytes());
        LayerManifest::new(entries).unwrap()
    }

    #[test]
    fn last_two_blocks_of_32() {
        let m = LayerManifest::synthetic_decoder(32, false);
        let plan = plan_freeze(&m, &FreezePolicy::default()).unwrap();
        assert_eq!(plan.trainable, ["block.30", "block.31"]);
        assert_eq!(plan.frozen.len(), 32);
        assert!(plan.warnings.is_empty());
        assert_eq!(plan.trainable_param_count, 2 * 202_383_360);
    }

    #[test]
    fn head_and_norm_flags() {
        let m = LayerManifest::synthetic_decoder(4, true);
        let policy = FreezePolicy {
            include_head: true,
            include_final_norm: true,
            ..Default::default()
        };
        let plan = plan_freeze(&m, &policy).unwrap();
        assert_eq!(plan.trainable, ["block.2", "block.3", "norm", "lm_head"]);
    }

    #[test]
    fn block_shortfall() {
        let two = LayerManifest::synthetic_decoder(2, false);
        let plan = plan_freeze(&two, &FreezePolicy::default()).unwrap();
        assert_eq!(plan.trainable, ["block.0", "block.1"]);
        assert!(plan.warnings.is_empty());

        let one = LayerManifest::synthetic_decoder(1, false);
        let plan = plan_freeze(&one, &FreezePolicy::default()).unwrap();
        assert_eq!(plan.trainable, ["block.0"]);
        assert_eq!(plan.warnings.len(), 1);
    }

    #[test]
    fn manifest_without_blocks() {
        let m = LayerManifest::synthetic_decoder(0, true);
        assert!(plan_freeze(&m, &FreezePolicy::default()).is_err());
        let zero = FreezePolicy {
            last_n_blocks: 0,
            ..Default::default()
        };
        assert!(plan_freeze(&LayerManifest::synthetic_decoder(2, false), &zero).is_err());
    }

    #[test]
    fn default_config_values() {
        let plan = plan_freeze(&LayerManifest::synthetic_decoder(2, false), &FreezePolicy::default()).unwrap();
        let cfg = emit_config(&plan, &BTreeMap::new()).unwrap();
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.learning_rate, 2e-5);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.max_sequence_length, 152);
        assert_eq!(cfg.warmup_ratio, 0.03);
        assert_eq!(cfg.weight_decay, 0.0);
        assert_eq!(cfg.to_json(), emit_config(&plan, &BTreeMap::new()).unwrap().to_json());
        assert!(cfg.to_json().starts_with("{\n  \"batch_size\": 16,\n  \"learning_rate\": 0.00002,\n"));
    }

    #[test]
    fn overrides() {
        let plan = plan_freeze(&LayerManifest::synthetic_decoder(2, false), &FreezePolicy::default()).unwrap();
        let cfg = emit_config(&plan, &BTreeMap::from([("epochs".to_owned(), Value::from(1))])).unwrap();
        assert_eq!(cfg.epochs, 1);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.learning_rate, 2e-5);

        let bad = BTreeMap::from([("nonsense_field".to_owned(), Value::from(5))]);
        assert!(matches!(emit_config(&plan, &bad), Err(Error::InvalidArgument(_))));
        let neg = BTreeMap::from([("batch_size".to_owned(), Value::from(-1))]);
        assert!(emit_config(&plan, &neg).is_err());
        let layers = BTreeMap::from([("frozen_layers".to_owned(), Value::from(Vec::<String>::new()))]);
        assert!(emit_config(&plan, &layers).is_err());
    }

    #[test]
    fn verify_examples() {
        let m = LayerManifest::synthetic_decoder(4, false);
        let plan = plan_freeze(&m, &FreezePolicy::default()).unwrap();

        let trained = mutate(&mutate(&m, "block.2"), "block.3");
        assert_eq!(verify_freeze(&m, &trained, &plan).unwrap().status, FreezeStatus::Pass);

        let leaked = mutate(&trained, "block.0");
        let r = verify_freeze(&m, &leaked, &plan).unwrap();
        assert_eq!(r.status, FreezeStatus::Fail);
        assert_eq!(r.changed_frozen, ["block.0"]);

        assert_eq!(verify_freeze(&m, &m, &plan).unwrap().status, FreezeStatus::Warn);
    }

    #[test]
    fn verify_rejects_mismatched_layers() {
        let m = LayerManifest::synthetic_decoder(4, false);
        let other = LayerManifest::synthetic_decoder(3, false);
        let plan = plan_freeze(&m, &FreezePolicy::default()).unwrap();
        assert!(verify_freeze(&m, &other, &plan).is_err());
        let foreign = plan_freeze(&other, &FreezePolicy::default()).unwrap();
        assert!(verify_freeze(&m, &m, &foreign).is_err());
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = LayerManifest::synthetic_decoder(3, true);
        assert_eq!(LayerManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn manifest_parse_errors() {
        assert!(matches!(
            LayerManifest::parse("embed embedding 10\n"),
            Err(Error::Parse { location: Location::Line(1), .. })
        ));
        let ck = checksum_hex(b"x");
        assert!(LayerManifest::parse(&format!("a block 1 {ck}\na block 1 {ck}\n")).is_err());
        assert!(LayerManifest::parse(&format!("a tower 1 {ck}\n")).is_err());
        assert!(LayerManifest::parse("a block 1 abc\n").is_err());
        assert!(LayerManifest::parse(&format!("h head 1 {ck}\nb block 1 {ck}\n")).is_err());
    }

    proptest! {
        #[test]
        fn plan_partitions_manifest(blocks in 1usize..40, n in 1usize..6, head in any::<bool>(), norm in any::<bool>(), with_norm in any::<bool>()) {
            let m = LayerManifest::synthetic_decoder(blocks, with_norm);
            let policy = FreezePolicy { last_n_blocks: n, include_head: head, include_final_norm: norm };
            let plan = plan_freeze(&m, &policy).unwrap();
            let mut all: Vec<&str> = plan.trainable.iter().chain(&plan.frozen).map(String::as_str).collect();
            prop_assert_eq!(all.len(), m.len());
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), m.len());
            let sum: u64 = m.entries().iter().filter(|e| plan.trainable.contains(&e.name)).map(|e| e.param_count).sum();
            prop_assert_eq!(sum, plan.trainable_param_count);
            prop_assert_ne!(verify_freeze(&m, &m, &plan).unwrap().status, FreezeStatus::Fail);
        }
    }
}
