use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalReport, MeanScores};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    TableText,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "table" | "text" | "table-text" => Ok(ReportFormat::TableText),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

pub const ABSENT: &str = "—";

/// Metric rows shown in each task-type section.
pub const ROWS: [&str; 8] = [
    "BLEU",
    "ROUGE-1",
    "ROUGE-2",
    "ROUGE-L",
    "BERT-P",
    "BERT-R",
    "BLEURT",
    "Word Count",
];

fn row_value(m: &MeanScores, row: &str) -> Option<String> {
    let two = |v: f64| format!("{v:.2}");
    match row {
        "BLEU" => Some(two(m.bleu)),
        "ROUGE-1" => Some(two(m.rouge1.f1)),
        "ROUGE-2" => Some(two(m.rouge2.f1)),
        "ROUGE-L" => Some(two(m.rouge_l.f1)),
        "BERT-P" => m.bert.map(|b| two(b.precision)),
        "BERT-R" => m.bert.map(|b| two(b.recall)),
        "BLEURT" => m.bleurt.map(two),
        "Word Count" => Some(m.word_count_display().to_string()),
        _ => unreachable!("unknown row {row}"),
    }
}

fn cells(report: &EvalReport, section: usize, row: &str) -> Vec<Option<String>> {
    report.sections[section]
        .cells
        .iter()
        .map(|c| c.mean.as_ref().and_then(|m| row_value(m, row)))
        .collect()
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::TableText => render_table(report),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
            s.push('\n');
            s
        }
    }
}

fn render_table(report: &EvalReport) -> String {
    const HEAD: &str = "Type of task";
    let first = ROWS
        .iter()
        .map(|r| r.chars().count() + 2)
        .chain(report.sections.iter().map(|s| s.task_type.section_label().chars().count()))
        .chain([HEAD.chars().count()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = report.systems.iter().map(|s| s.chars().count().max(8)).collect();

    let mut out = String::new();
    let _ = write!(out, "{HEAD:<first$}");
    for (name, w) in report.systems.iter().zip(&widths) {
        let _ = write!(out, "  {name:>w$}");
    }
    out.push('\n');
    for (si, section) in report.sections.iter().enumerate() {
        let _ = writeln!(out, "{}", section.task_type.section_label());
        for row in ROWS {
            let label = format!("  {row}");
            let _ = write!(out, "{label:<first$}");
            for (v, w) in cells(report, si, row).into_iter().zip(&widths) {
                let v = v.unwrap_or_else(|| ABSENT.to_owned());
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
    }
    let missing: Vec<String> = report
        .systems
        .iter()
        .enumerate()
        .filter_map(|(i, name)| {
            let parts: Vec<String> = report
                .sections
                .iter()
                .filter(|s| s.cells[i].missing > 0)
                .map(|s| format!("{} {}", s.task_type.section_label(), s.cells[i].missing))
                .collect();
            (!parts.is_empty()).then(|| format!("{name}: {}", parts.join(", ")))
        })
        .collect();
    if !missing.is_empty() {
        let _ = writeln!(out, "\nMissing answers: {}", missing.join("; "));
    }
    out
}

fn render_csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["task_type", "metric"].into_iter().chain(report.systems.iter().map(String::as_str));
    w.write_record(header).expect("in-memory write");
    for (si, section) in report.sections.iter().enumerate() {
        for row in ROWS {
            let values = cells(report, si, row);
            let record = [section.task_type.section_label(), row]
                .into_iter()
                .chain(values.iter().map(|v| v.as_deref().unwrap_or("")));
            w.write_record(record).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
}
