//! Instruction dataset model: records, validation, persistence, statistics and
//! stratified splitting.
//!
//! Two on-disk formats are supported. Record-lines files hold one JSON object
//! per line with exactly the fields `id, instruction, input, output,
//! task_type, source, provenance`. Instruction-array files are a JSON array of
//! bare `{instruction, input, output}` objects; the remaining fields come from
//! caller-supplied defaults and ids are derived from content.

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::{SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskType {
    Definition,
    Inclusions,
    Exclusions,
    Categories,
    Examples,
    Guidance,
}

impl TaskType {
    pub const ALL: [TaskType; 6] = [
        TaskType::Definition,
        TaskType::Inclusions,
        TaskType::Exclusions,
        TaskType::Categories,
        TaskType::Examples,
        TaskType::Guidance,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TaskType::Definition => "Definition",
            TaskType::Inclusions => "Inclusions",
            TaskType::Exclusions => "Exclusions",
            TaskType::Categories => "Categories",
            TaskType::Examples => "Examples",
            TaskType::Guidance => "Guidance",
        }
    }

    /// Heading used for this task type in comparison reports.
    pub fn section_label(self) -> &'static str {
        match self {
            TaskType::Definition => "Definitions",
            other => other.label(),
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TaskType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskType::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown task type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SourceTag {
    Mmucc,
    Hsm,
    Generated,
}

impl SourceTag {
    pub const ALL: [SourceTag; 3] = [SourceTag::Mmucc, SourceTag::Hsm, SourceTag::Generated];

    pub fn label(self) -> &'static str {
        match self {
            SourceTag::Mmucc => "MMUCC",
            SourceTag::Hsm => "HSM",
            SourceTag::Generated => "GENERATED",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SourceTag::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown source {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Human,
    ModelGenerated,
}

impl Provenance {
    pub const ALL: [Provenance; 2] = [Provenance::Human, Provenance::ModelGenerated];

    pub fn label(self) -> &'static str {
        match self {
            Provenance::Human => "HUMAN",
            Provenance::ModelGenerated => "MODEL_GENERATED",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Provenance::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown provenance {s:?}")))
    }
}

/// One instruction/input/output triple. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub task_type: TaskType,
    pub source: SourceTag,
    pub provenance: Provenance,
}

/// A record as read from disk, before its labels are checked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub id: String,
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub task_type: String,
    pub source: String,
    pub provenance: String,
}

impl From<&InstructionRecord> for RawRecord {
    fn from(r: &InstructionRecord) -> Self {
        RawRecord {
            id: r.id.clone(),
            instruction: r.instruction.clone(),
            input: r.input.clone(),
            output: r.output.clone(),
            task_type: r.task_type.label().to_owned(),
            source: r.source.label().to_owned(),
            provenance: r.provenance.label().to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    EmptyInput,
    EmptyOutput,
    UnknownTaskType(String),
    UnknownSource(String),
    UnknownProvenance(String),
    /// GENERATED source must pair with MODEL_GENERATED provenance and vice versa.
    SourceProvenanceMismatch,
    DuplicateId(String),
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyId => "empty-id",
            Violation::EmptyInput => "empty-input",
            Violation::EmptyOutput => "empty-output",
            Violation::UnknownTaskType(_) => "unknown-task-type",
            Violation::UnknownSource(_) => "unknown-source",
            Violation::UnknownProvenance(_) => "unknown-provenance",
            Violation::SourceProvenanceMismatch => "source-provenance-mismatch",
            Violation::DuplicateId(_) => "duplicate-id",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownTaskType(v)
            | Violation::UnknownSource(v)
            | Violation::UnknownProvenance(v)
            | Violation::DuplicateId(v) => write!(f, "{}: {v:?}", self.code()),
            _ => f.write_str(self.code()),
        }
    }
}

fn field_violations(id: &str, input: &str, output: &str) -> Vec<Violation> {
    let mut v = Vec::new();
    if id.trim().is_empty() {
        v.push(Violation::EmptyId);
    }
    if input.trim().is_empty() {
        v.push(Violation::EmptyInput);
    }
    if output.trim().is_empty() {
        v.push(Violation::EmptyOutput);
    }
    v
}

fn pairing_ok(source: SourceTag, provenance: Provenance) -> bool {
    (source == SourceTag::Generated) == (provenance == Provenance::ModelGenerated)
}

/// Checks a raw record, returning the typed record or every violated rule.
pub fn validate_record(raw: &RawRecord) -> std::result::Result<InstructionRecord, Vec<Violation>> {
    let mut violations = field_violations(&raw.id, &raw.input, &raw.output);
    let task = TaskType::from_str(&raw.task_type).ok();
    let source = SourceTag::from_str(&raw.source).ok();
    let provenance = Provenance::from_str(&raw.provenance).ok();
    if task.is_none() {
        violations.push(Violation::UnknownTaskType(raw.task_type.clone()));
    }
    if source.is_none() {
        violations.push(Violation::UnknownSource(raw.source.clone()));
    }
    if provenance.is_none() {
        violations.push(Violation::UnknownProvenance(raw.provenance.clone()));
    }
    if let (Some(s), Some(p)) = (source, provenance) {
        if !pairing_ok(s, p) {
            violations.push(Violation::SourceProvenanceMismatch);
        }
    }
    match (task, source, provenance) {
        (Some(task_type), Some(source), Some(provenance)) if violations.is_empty() => Ok(InstructionRecord {
            id: raw.id.clone(),
            instruction: raw.instruction.clone(),
            input: raw.input.clone(),
            output: raw.output.clone(),
            task_type,
            source,
            provenance,
        }),
        _ => Err(violations),
    }
}

impl InstructionRecord {
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = field_violations(&self.id, &self.input, &self.output);
        if !pairing_ok(self.source, self.provenance) {
            v.push(Violation::SourceProvenanceMismatch);
        }
        v
    }
}

/// Content-derived identifier: `{prefix}-` followed by 16 hex digits of a
/// SHA-256 over the given fields.
pub fn content_id(prefix: &str, fields: &[&str]) -> String {
    let mut h = Sha256::new();
    for f in fields {
        h.update(f.as_bytes());
        h.update([0x1f]);
    }
    let digest = h.finalize();
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("{prefix}-{hex}")
}

/// Checks every record plus id uniqueness.
pub fn validate_dataset(records: &[InstructionRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    let mut bad = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let mut v = r.violations();
        if !seen.insert(r.id.as_str()) {
            v.push(Violation::DuplicateId(r.id.clone()));
        }
        if !v.is_empty() {
            bad.push((Location::Line(i + 1), v.iter().map(ToString::to_string).collect()));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(bad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    RecordLines,
    InstructionArray,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "record-lines" | "jsonl" => Ok(DatasetFormat::RecordLines),
            "instruction-array" | "json" => Ok(DatasetFormat::InstructionArray),
            other => Err(Error::invalid(format!("unknown dataset format {other:?}"))),
        }
    }
}

/// Labels applied to bare instruction-array triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordDefaults {
    pub task_type: TaskType,
    pub source: SourceTag,
    pub provenance: Provenance,
}

impl Default for RecordDefaults {
    fn default() -> Self {
        RecordDefaults {
            task_type: TaskType::Guidance,
            source: SourceTag::Hsm,
            provenance: Provenance::Human,
        }
    }
}

pub fn to_record_lines(records: &[InstructionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_record_lines(text: &str) -> Result<Vec<InstructionRecord>> {
    let mut records = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            location: Location::Line(i + 1),
            message: e.to_string(),
        })?;
        match validate_record(&raw) {
            Ok(r) => records.push(r),
            Err(v) => bad.push((Location::Line(i + 1), v.iter().map(ToString::to_string).collect())),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Data(bad));
    }
    validate_dataset(&records)?;
    Ok(records)
}

#[derive(Debug, Deserialize)]
struct BareTriple {
    instruction: String,
    #[serde(default)]
    input: String,
    output: String,
}

struct CountingSeq<'a>(&'a Cell<usize>);

impl<'de> Visitor<'de> for CountingSeq<'_> {
    type Value = Vec<serde_json::Value>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an array of instruction objects")
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
        let mut out = Vec::new();
        loop {
            self.0.set(out.len() + 1);
            match seq.next_element()? {
                Some(v) => out.push(v),
                None => return Ok(out),
            }
        }
    }
}

pub fn parse_instruction_array(text: &str, defaults: RecordDefaults) -> Result<Vec<InstructionRecord>> {
    let current = Cell::new(0);
    let mut de = serde_json::Deserializer::from_str(text);
    let values = de
        .deserialize_seq(CountingSeq(&current))
        .and_then(|v| de.end().map(|_| v))
        .map_err(|e| Error::Parse {
            location: match current.get() {
                0 => Location::Position {
                    line: e.line(),
                    column: e.column(),
                },
                n => Location::Element(n),
            },
            message: e.to_string(),
        })?;

    let mut id_uses: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::with_capacity(values.len());
    let mut bad = Vec::new();
    for (i, value) in values.into_iter().enumerate() {
        let t: BareTriple = serde_json::from_value(value).map_err(|e| Error::Parse {
            location: Location::Element(i + 1),
            message: e.to_string(),
        })?;
        let base = content_id("rec", &[&t.instruction, &t.input, &t.output]);
        let uses = id_uses.entry(base.clone()).or_default();
        *uses += 1;
        let id = if *uses == 1 { base } else { format!("{base}-{uses}") };
        let raw = RawRecord {
            id,
            instruction: t.instruction,
            input: t.input,
            output: t.output,
            task_type: defaults.task_type.label().into(),
            source: defaults.source.label().into(),
            provenance: defaults.provenance.label().into(),
        };
        match validate_record(&raw) {
            Ok(r) => records.push(r),
            Err(v) => bad.push((Location::Element(i + 1), v.iter().map(ToString::to_string).collect())),
        }
    }
    if bad.is_empty() {
        Ok(records)
    } else {
        Err(Error::Data(bad))
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat, defaults: RecordDefaults) -> Result<Vec<InstructionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        DatasetFormat::RecordLines => parse_record_lines(&text),
        DatasetFormat::InstructionArray => parse_instruction_array(&text, defaults),
    }
}

pub fn save_dataset(path: impl AsRef<Path>, records: &[InstructionRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_record_lines(records)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub total: usize,
    pub by_source: BTreeMap<SourceTag, usize>,
    pub by_task: BTreeMap<TaskType, usize>,
    pub by_provenance: BTreeMap<Provenance, usize>,
}

pub fn stats(records: &[InstructionRecord]) -> DatasetStats {
    let mut s = DatasetStats {
        total: records.len(),
        by_source: SourceTag::ALL.iter().map(|t| (*t, 0)).collect(),
        by_task: TaskType::ALL.iter().map(|t| (*t, 0)).collect(),
        by_provenance: Provenance::ALL.iter().map(|t| (*t, 0)).collect(),
    };
    for r in records {
        *s.by_source.entry(r.source).or_default() += 1;
        *s.by_task.entry(r.task_type).or_default() += 1;
        *s.by_provenance.entry(r.provenance).or_default() += 1;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<InstructionRecord>,
    pub test: Vec<InstructionRecord>,
}

/// Stratified, seeded train/test split.
///
/// The overall train size is `round(fraction × N)`; it is apportioned across
/// task types by largest remainder, so each type's train count is the floor
/// or ceiling of `fraction × type_count`. Both halves keep input order.
pub fn split(records: &[InstructionRecord], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    if records.is_empty() {
        return Err(Error::invalid("cannot split an empty dataset"));
    }

    let mut groups: BTreeMap<TaskType, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.task_type).or_default().push(i);
    }

    let target = (train_fraction * records.len() as f64).round() as usize;
    let mut quotas: Vec<(TaskType, usize, f64)> = groups
        .iter()
        .map(|(t, idx)| {
            let exact = train_fraction * idx.len() as f64;
            (*t, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &k in order.iter().take(target.saturating_sub(assigned)) {
        quotas[k].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; records.len()];
    for (task, quota, _) in quotas {
        let mut idx = groups[&task].clone();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(quota) {
            in_train[i] = true;
        }
    }

    let (train, test): (Vec<_>, Vec<_>) = records.iter().cloned().zip(in_train).partition(|(_, t)| *t);
    Ok(Split {
        train: train.into_iter().map(|(r, _)| r).collect(),
        test: test.into_iter().map(|(r, _)| r).collect(),
    })
}
