//! Parses model replies written in the `Instruction:` / `Input:` / `Output:`
//! block layout. Header names are case-insensitive and may be preceded by
//! list markers such as `1.` or `-`. An optional `Type:` line sets the task
//! type. Lines without a header continue the previous field.

use std::str::FromStr;

use serde::Serialize;

use crate::dataset::{Provenance, SourceTag, TaskType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub task_type: Option<TaskType>,
    /// The block's source text, kept for audit.
    pub raw_excerpt: String,
}

impl CandidateRecord {
    pub fn source(&self) -> SourceTag {
        SourceTag::Generated
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::ModelGenerated
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedGenerations {
    pub candidates: Vec<CandidateRecord>,
    /// Blocks missing one of the three fields.
    pub dropped: usize,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Instruction,
    Input,
    Output,
    Type,
}

fn header(line: &str) -> Option<(Field, &str)> {
    let stripped = line
        .trim_start()
        .trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*' | '#'))
        .trim_start();
    let (key, rest) = stripped.split_once(':')?;
    let field = match key.trim().trim_matches('*').to_ascii_lowercase().as_str() {
        "instruction" => Field::Instruction,
        "input" => Field::Input,
        "output" => Field::Output,
        "type" => Field::Type,
        _ => return None,
    };
    Some((field, rest.trim()))
}

#[derive(Default)]
struct Block {
    instruction: Option<String>,
    input: Option<String>,
    output: Option<String>,
    task_type: Option<TaskType>,
    lines: Vec<String>,
    last: Option<Field>,
}

impl Block {
    fn is_empty(&self) -> bool {
        self.instruction.is_none() && self.input.is_none() && self.output.is_none()
    }

    fn slot(&mut self, f: Field) -> Option<&mut Option<String>> {
        match f {
            Field::Instruction => Some(&mut self.instruction),
            Field::Input => Some(&mut self.input),
            Field::Output => Some(&mut self.output),
            Field::Type => None,
        }
    }

    fn has(&self, f: Field) -> bool {
        match f {
            Field::Instruction => self.instruction.is_some(),
            Field::Input => self.input.is_some(),
            Field::Output => self.output.is_some(),
            Field::Type => self.task_type.is_some(),
        }
    }

    fn finish(self, out: &mut ParsedGenerations) {
        if self.is_empty() {
            return;
        }
        let clean = |v: Option<String>| v.map(|s| s.trim().to_owned()).filter(|s| !s.is_empty());
        match (clean(self.instruction), clean(self.input), clean(self.output)) {
            (Some(instruction), Some(input), Some(output)) => out.candidates.push(CandidateRecord {
                instruction,
                input,
                output,
                task_type: self.task_type,
                raw_excerpt: self.lines.join("\n"),
            }),
            _ => out.dropped += 1,
        }
    }
}

pub fn parse_generations(raw: &str) -> ParsedGenerations {
    let mut out = ParsedGenerations::default();
    let mut block = Block::default();
    for line in raw.lines() {
        match header(line) {
            Some((field, value)) => {
                let starts_new = field == Field::Instruction || block.has(field);
                if starts_new && !block.is_empty() {
                    std::mem::take(&mut block).finish(&mut out);
                }
                block.lines.push(line.to_owned());
                if field == Field::Type {
                    block.task_type = TaskType::from_str(value).ok();
                    block.last = None;
                } else {
                    *block.slot(field).unwrap() = Some(value.to_owned());
                    block.last = Some(field);
                }
            }
            None => {
                if line.trim().is_empty() {
                    continue;
                }
                if let Some(f) = block.last {
                    block.lines.push(line.to_owned());
                    let s = block.slot(f).unwrap().get_or_insert_with(String::new);
                    if !s.is_empty() {
                        s.push('\n');
                    }
                    s.push_str(line.trim());
                }
            }
        }
    }
    block.finish(&mut out);
    if out.dropped > 0 {
        log::warn!("dropped {} incomplete generated block(s)", out.dropped);
    }
    if out.candidates.is_empty() {
        out.diagnostic = Some(format!(
            "no complete Instruction/Input/Output block found ({} incomplete)",
            out.dropped
        ));
    }
    out
}
