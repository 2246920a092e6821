//! Guidebook ingestion: turns curated entry blocks into human-labeled
//! instruction records.
//!
//! Entry-block format: blocks separated by blank lines, each starting with the
//! header lines `TERM:`, `KIND:` and `SOURCE:` (any order), followed by the
//! answer body. Lines starting with `#` outside a block are comments.
//!
//! ```text
//! TERM: a van
//! KIND: Definition
//! SOURCE: MMUCC
//! A van is a motor vehicle consisting primarily of a transport device ...
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::dataset::{content_id, validate_record, InstructionRecord, Provenance, RawRecord, SourceTag, TaskType};
use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuidebookEntry {
    pub term: String,
    pub kind: TaskType,
    pub body: String,
    pub source: SourceTag,
}

fn block_error(block: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: Location::Block(block),
        message: message.into(),
    }
}

pub fn parse_guidebook(text: &str) -> Result<Vec<GuidebookEntry>> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
        } else if current.is_empty() && line.trim_start().starts_with('#') {
            continue;
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }

    blocks
        .into_iter()
        .enumerate()
        .map(|(i, lines)| parse_block(i + 1, &lines))
        .collect()
}

fn parse_block(index: usize, lines: &[&str]) -> Result<GuidebookEntry> {
    let (mut term, mut kind, mut source) = (None, None, None);
    let mut body_start = lines.len();
    for (i, line) in lines.iter().enumerate() {
        let Some((key, value)) = line.split_once(':') else {
            body_start = i;
            break;
        };
        let value = value.trim();
        match key.trim() {
            "TERM" if term.is_none() => term = Some(value.to_owned()),
            "KIND" if kind.is_none() => {
                kind = Some(TaskType::from_str(value).map_err(|_| block_error(index, format!("unknown KIND {value:?}")))?)
            }
            "SOURCE" if source.is_none() => {
                let s = SourceTag::from_str(value).map_err(|_| block_error(index, format!("unknown SOURCE {value:?}")))?;
                if s == SourceTag::Generated {
                    return Err(block_error(index, "guidebook entries cannot have SOURCE GENERATED"));
                }
                source = Some(s)
            }
            _ => {
                body_start = i;
                break;
            }
        }
    }
    let term = term.ok_or_else(|| block_error(index, "missing TERM header"))?;
    let kind = kind.ok_or_else(|| block_error(index, "missing KIND header"))?;
    let source = source.ok_or_else(|| block_error(index, "missing SOURCE header"))?;
    let body = lines[body_start..].iter().map(|l| l.trim()).collect::<Vec<_>>().join("\n");
    Ok(GuidebookEntry { term, kind, body, source })
}

/// Question templates per task type; `{term}` is replaced by the entry term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionTemplates {
    templates: BTreeMap<TaskType, String>,
}

impl Default for QuestionTemplates {
    fn default() -> Self {
        let t = |s: &str| s.to_owned();
        QuestionTemplates {
            templates: BTreeMap::from([
                (TaskType::Definition, t("What is the definition of {term} in Motor Vehicle Traffic Crashes?")),
                (TaskType::Inclusions, t("What are the inclusions of {term} in Motor Vehicle Traffic Crashes?")),
                (TaskType::Exclusions, t("What are the exclusions of {term} in Motor Vehicle Traffic Crashes?")),
                (
                    TaskType::Categories,
                    t("What is the guide to the classification of {term} in Motor Vehicle Traffic Crashes?"),
                ),
                (TaskType::Examples, t("What are the Examples of {term} in Motor Vehicle Traffic Crashes?")),
                (TaskType::Guidance, t("How do you deal with {term}?")),
            ]),
        }
    }
}

impl QuestionTemplates {
    pub fn with_override(mut self, kind: TaskType, template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if !template.contains("{term}") {
            return Err(Error::invalid(format!("template for {kind} lacks a {{term}} placeholder")));
        }
        self.templates.insert(kind, template);
        Ok(self)
    }

    pub fn render(&self, term: &str, kind: TaskType) -> Result<String> {
        let term = term.trim();
        if term.is_empty() {
            return Err(Error::invalid("question term must be non-empty"));
        }
        Ok(self.templates[&kind].replace("{term}", term))
    }
}

pub fn template_question(term: &str, kind: TaskType) -> Result<String> {
    QuestionTemplates::default().render(term, kind)
}

/// Instruction (persona) text per guidebook source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaMap(BTreeMap<SourceTag, String>);

impl Default for PersonaMap {
    fn default() -> Self {
        PersonaMap(BTreeMap::from([
            (SourceTag::Mmucc, "You are a police officer at the crash Scene".to_owned()),
            (SourceTag::Hsm, "You are a traffic engineer work for DOT".to_owned()),
        ]))
    }
}

impl PersonaMap {
    pub fn new(personas: BTreeMap<SourceTag, String>) -> Self {
        PersonaMap(personas)
    }

    pub fn get(&self, source: SourceTag) -> Option<&str> {
        self.0.get(&source).map(String::as_str)
    }
}

pub fn to_records(entries: &[GuidebookEntry], personas: &PersonaMap) -> Result<Vec<InstructionRecord>> {
    to_records_with(entries, personas, &QuestionTemplates::default())
}

pub fn to_records_with(
    entries: &[GuidebookEntry],
    personas: &PersonaMap,
    templates: &QuestionTemplates,
) -> Result<Vec<InstructionRecord>> {
    let mut bad = Vec::new();
    let mut records = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let persona = personas
            .get(e.source)
            .ok_or_else(|| Error::Config(format!("no persona configured for source {}", e.source)))?;
        if e.term.trim().is_empty() {
            bad.push((Location::Block(i + 1), vec!["empty-term".to_owned()]));
            continue;
        }
        let input = templates.render(&e.term, e.kind)?;
        let raw = RawRecord {
            id: content_id("hum", &[persona, &input, &e.body, e.kind.label(), e.source.label()]),
            instruction: persona.to_owned(),
            input,
            output: e.body.clone(),
            task_type: e.kind.label().to_owned(),
            source: e.source.label().to_owned(),
            provenance: Provenance::Human.label().to_owned(),
        };
        match validate_record(&raw) {
            Ok(r) => records.push(r),
            Err(v) => bad.push((Location::Block(i + 1), v.iter().map(ToString::to_string).collect())),
        }
    }
    if bad.is_empty() {
        Ok(records)
    } else {
        Err(Error::Data(bad))
    }
}
