//! Evaluation harness: scores system answers against gold references per task
//! type and aggregates them into comparison reports.

pub mod collect;
pub mod render;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use collect::{collect_outputs, CollectError};
pub use render::{render_report, ReportFormat};

use crate::dataset::TaskType;
use crate::error::{Error, Location};
use crate::metrics::{score_pair, BleurtProvider, EmbeddingProvider, MetricConfig, PrfTriple, ScoreError, ScoreSet};
use crate::retry::RemoteError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub task_type: TaskType,
    pub instruction: String,
    pub input: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub item_id: String,
    pub system_name: String,
    pub text: String,
}

/// All answers produced by one system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemRun {
    pub name: String,
    pub outputs: Vec<SystemOutput>,
}

/// Groups outputs by system name, in order of first appearance.
pub fn group_by_system(outputs: Vec<SystemOutput>) -> Vec<SystemRun> {
    let mut runs: Vec<SystemRun> = Vec::new();
    for o in outputs {
        match runs.iter_mut().find(|r| r.name == o.system_name) {
            Some(r) => r.outputs.push(o),
            None => runs.push(SystemRun {
                name: o.system_name.clone(),
                outputs: vec![o],
            }),
        }
    }
    runs
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> crate::Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                location: Location::Line(i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> crate::Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("rows always serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_items(path: impl AsRef<Path>) -> crate::Result<Vec<EvalItem>> {
    let items: Vec<EvalItem> = read_lines(path.as_ref())?;
    let mut seen = HashSet::new();
    let mut bad = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let mut v = Vec::new();
        if item.reference.trim().is_empty() {
            v.push("empty-reference".to_owned());
        }
        if !seen.insert(item.id.as_str()) {
            v.push(format!("duplicate-id: {:?}", item.id));
        }
        if !v.is_empty() {
            bad.push((Location::Line(i + 1), v));
        }
    }
    if bad.is_empty() {
        Ok(items)
    } else {
        Err(Error::Data(bad))
    }
}

pub fn save_items(path: impl AsRef<Path>, items: &[EvalItem]) -> crate::Result<()> {
    write_lines(path.as_ref(), items)
}

pub fn load_outputs(path: impl AsRef<Path>) -> crate::Result<Vec<SystemOutput>> {
    read_lines(path.as_ref())
}

pub fn save_outputs(path: impl AsRef<Path>, outputs: &[SystemOutput]) -> crate::Result<()> {
    write_lines(path.as_ref(), outputs)
}

/// Field-wise means over a set of item scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub items: usize,
    pub bleu: f64,
    pub rouge1: PrfTriple,
    pub rouge2: PrfTriple,
    pub rouge_l: PrfTriple,
    pub bert: Option<PrfTriple>,
    pub bleurt: Option<f64>,
    pub word_count: f64,
}

impl MeanScores {
    /// Word count rounded half-up for display.
    pub fn word_count_display(&self) -> u64 {
        (self.word_count + 0.5).floor() as u64
    }
}

/// Mean that does not depend on input order.
fn stable_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

fn mean_prf(triples: Vec<PrfTriple>) -> Option<PrfTriple> {
    Some(PrfTriple {
        precision: stable_mean(triples.iter().map(|t| t.precision).collect())?,
        recall: stable_mean(triples.iter().map(|t| t.recall).collect())?,
        f1: stable_mean(triples.iter().map(|t| t.f1).collect())?,
    })
}

/// Arithmetic mean of every field. BERTScore and BLEURT means cover only the
/// items where they are present.
pub fn aggregate(scores: &[ScoreSet]) -> crate::Result<MeanScores> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty score list"));
    }
    let unwrap = |v: Option<f64>| v.expect("non-empty");
    Ok(MeanScores {
        items: scores.len(),
        bleu: unwrap(stable_mean(scores.iter().map(|s| s.bleu).collect())),
        rouge1: mean_prf(scores.iter().map(|s| s.rouge1).collect()).expect("non-empty"),
        rouge2: mean_prf(scores.iter().map(|s| s.rouge2).collect()).expect("non-empty"),
        rouge_l: mean_prf(scores.iter().map(|s| s.rouge_l).collect()).expect("non-empty"),
        bert: mean_prf(scores.iter().filter_map(|s| s.bert).collect()),
        bleurt: stable_mean(scores.iter().filter_map(|s| s.bleurt).collect()),
        word_count: unwrap(stable_mean(scores.iter().map(|s| s.word_count as f64).collect())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub item_id: String,
    pub scores: ScoreSet,
    /// Scored as an empty answer because the system gave none (strict mode).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing: bool,
}

/// One system's results for one task type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: Option<MeanScores>,
    pub missing: usize,
    pub items: Vec<ItemScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub task_type: TaskType,
    /// Aligned with `EvalReport::systems`.
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub metric_config: MetricConfig,
    /// SHA-256 over the evaluation items, independent of their order.
    pub dataset_digest: String,
    pub timestamp: Option<String>,
    pub strict_missing: bool,
    pub idf_weighted: bool,
    pub bleurt_configured: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub systems: Vec<String>,
    /// Always the six task types in canonical order.
    pub sections: Vec<Section>,
    pub warnings: Vec<String>,
    pub metadata: ReportMetadata,
}

impl EvalReport {
    pub fn cell(&self, system: &str, task: TaskType) -> Option<&Cell> {
        let col = self.systems.iter().position(|s| s == system)?;
        self.sections.iter().find(|s| s.task_type == task).map(|s| &s.cells[col])
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalOptions {
    pub metrics: MetricConfig,
    /// Score missing answers as empty strings instead of excluding them.
    pub strict_missing: bool,
    pub timestamp: Option<String>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("provider failed on item {item_id} for system {system}: {source}")]
    Provider {
        system: String,
        item_id: String,
        #[source]
        source: RemoteError,
    },
}

pub fn dataset_digest(items: &[EvalItem]) -> String {
    let mut lines: Vec<String> = items
        .iter()
        .map(|i| serde_json::to_string(i).expect("items always serialize"))
        .collect();
    lines.sort();
    let mut h = Sha256::new();
    for l in &lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn run_eval(
    items: &[EvalItem],
    systems: &[SystemRun],
    options: &EvalOptions,
    embedder: &dyn EmbeddingProvider,
    bleurt: Option<&dyn BleurtProvider>,
) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::InvalidArgument("evaluation set is empty".into()));
    }
    if systems.is_empty() {
        return Err(EvalError::InvalidArgument("no systems to evaluate".into()));
    }
    let by_id: HashMap<&str, &EvalItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    if by_id.len() != items.len() {
        return Err(EvalError::Data("duplicate item ids in evaluation set".into()));
    }

    let mut warnings = Vec::new();
    let mut kept: Vec<(&str, HashMap<&str, &SystemOutput>)> = Vec::new();
    for run in systems {
        if run.outputs.is_empty() {
            warnings.push(format!("system {:?} has no outputs and was excluded", run.name));
            log::warn!("system {:?} has no outputs and was excluded", run.name);
            continue;
        }
        if kept.iter().any(|(n, _)| *n == run.name) {
            return Err(EvalError::Data(format!("system {:?} listed twice", run.name)));
        }
        let mut answers = HashMap::new();
        for o in &run.outputs {
            if o.system_name != run.name {
                return Err(EvalError::Data(format!(
                    "output for item {:?} names system {:?} inside run {:?}",
                    o.item_id, o.system_name, run.name
                )));
            }
            if !by_id.contains_key(o.item_id.as_str()) {
                return Err(EvalError::Data(format!("system {:?} answers unknown item {:?}", run.name, o.item_id)));
            }
            if answers.insert(o.item_id.as_str(), o).is_some() {
                return Err(EvalError::Data(format!("system {:?} answers item {:?} twice", run.name, o.item_id)));
            }
        }
        kept.push((run.name.as_str(), answers));
    }
    if kept.is_empty() {
        return Err(EvalError::InvalidArgument("every system was excluded for having no outputs".into()));
    }

    // (system index, item index, answer or None when missing)
    let jobs: Vec<(usize, usize, Option<&str>)> = kept
        .iter()
        .enumerate()
        .flat_map(|(s, (_, answers))| {
            items
                .iter()
                .enumerate()
                .map(move |(i, item)| (s, i, answers.get(item.id.as_str()).map(|o| o.text.as_str())))
        })
        .collect();

    let scored: Vec<Result<Option<ItemScore>, EvalError>> = jobs
        .par_iter()
        .map(|&(s, i, answer)| {
            let item = &items[i];
            let text = match answer {
                Some(t) => t,
                None if options.strict_missing => "",
                None => return Ok(None),
            };
            score_pair(text, &item.reference, &options.metrics, embedder, bleurt)
                .map(|scores| {
                    Some(ItemScore {
                        item_id: item.id.clone(),
                        scores,
                        missing: answer.is_none(),
                    })
                })
                .map_err(|e| match e {
                    ScoreError::InvalidArgument(m) => EvalError::Data(format!("item {:?}: {m}", item.id)),
                    ScoreError::Provider { source, .. } => EvalError::Provider {
                        system: kept[s].0.to_owned(),
                        item_id: item.id.clone(),
                        source,
                    },
                })
        })
        .collect();

    let mut sections: Vec<Section> = TaskType::ALL
        .iter()
        .map(|t| Section {
            task_type: *t,
            cells: kept
                .iter()
                .map(|_| Cell {
                    mean: None,
                    missing: 0,
                    items: Vec::new(),
                })
                .collect(),
        })
        .collect();
    let section_of = |t: TaskType| TaskType::ALL.iter().position(|x| *x == t).expect("closed enum");

    for (&(s, i, answer), result) in jobs.iter().zip(scored) {
        let cell = &mut sections[section_of(items[i].task_type)].cells[s];
        if answer.is_none() {
            cell.missing += 1;
        }
        if let Some(item_score) = result? {
            cell.items.push(item_score);
        }
    }
    for section in &mut sections {
        for cell in &mut section.cells {
            if !cell.items.is_empty() {
                let sets: Vec<ScoreSet> = cell.items.iter().map(|i| i.scores.clone()).collect();
                cell.mean = Some(aggregate(&sets).expect("non-empty"));
            }
        }
    }
    for (s, (name, _)) in kept.iter().enumerate() {
        let missing: usize = sections.iter().map(|sec| sec.cells[s].missing).sum();
        if missing > 0 {
            warnings.push(format!("system {name:?} left {missing} item(s) unanswered"));
        }
    }

    Ok(EvalReport {
        systems: kept.iter().map(|(n, _)| (*n).to_owned()).collect(),
        sections,
        warnings,
        metadata: ReportMetadata {
            metric_config: options.metrics.clone(),
            dataset_digest: dataset_digest(items),
            timestamp: options.timestamp.clone(),
            strict_missing: options.strict_missing,
            idf_weighted: options.metrics.idf.is_some(),
            bleurt_configured: bleurt.is_some(),
        },
    })
}
