//! Evaluation reports in the layout of the accuracy and P/R/F1 tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grading::GradedRecord;
use super::metrics::{compute_accuracy, compute_prf, ConfusionTally, Prf};
use super::EvalError;
use crate::knowledge::Category;

const BASELINE: &str = include_str!("../../data/published_baseline.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    /// Distinct questions asked in this row.
    pub question_count: usize,
    pub accuracy: f64,
    pub accuracy_with_partial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFileInfo {
    pub name: String,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// All nine categories; categories without records have zero counts.
    pub per_category: BTreeMap<Category, AccuracyRow>,
    /// Pooled over every record.
    pub overall: AccuracyRow,
    /// Unweighted mean of each file's pooled accuracy.
    pub overall_per_file_mean: AccuracyRow,
    pub tally: ConfusionTally,
    pub prf_without_partial: Prf,
    pub prf_with_partial: Prf,
    pub corpus: Vec<CorpusFileInfo>,
}

fn distinct_questions<'a>(records: impl Iterator<Item = &'a GradedRecord>) -> usize {
    records.map(|r| r.question.as_str()).collect::<BTreeSet<_>>().len()
}

pub fn build_report(records: &[GradedRecord]) -> Result<EvaluationReport, EvalError> {
    let without = compute_accuracy(records, false)?;
    let with = compute_accuracy(records, true)?;
    let per_category = Category::ALL
        .iter()
        .map(|c| {
            let row = AccuracyRow {
                question_count: distinct_questions(records.iter().filter(|r| r.category == *c)),
                accuracy: without.per_category.get(c).copied().unwrap_or(0.0),
                accuracy_with_partial: with.per_category.get(c).copied().unwrap_or(0.0),
            };
            (*c, row)
        })
        .collect();

    let mut by_file: BTreeMap<&str, Vec<GradedRecord>> = BTreeMap::new();
    for r in records {
        by_file.entry(r.source.as_str()).or_default().push(r.clone());
    }
    let mut sums = (0.0, 0.0);
    for file_records in by_file.values() {
        sums.0 += compute_accuracy(file_records, false)?.overall;
        sums.1 += compute_accuracy(file_records, true)?.overall;
    }
    let files = by_file.len() as f64;
    let question_count = distinct_questions(records.iter());
    let tally = ConfusionTally::from_records(records);
    Ok(EvaluationReport {
        per_category,
        overall: AccuracyRow { question_count, accuracy: without.overall, accuracy_with_partial: with.overall },
        overall_per_file_mean: AccuracyRow {
            question_count,
            accuracy: sums.0 / files,
            accuracy_with_partial: sums.1 / files,
        },
        tally,
        prf_without_partial: compute_prf(&tally, false),
        prf_with_partial: compute_prf(&tally, true),
        corpus: by_file.iter().map(|(n, rs)| CorpusFileInfo { name: n.to_string(), records: rs.len() }).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "table" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}` (expected text, csv or json)")),
        }
    }
}

pub const OVERALL_ROW: &str = "Overall";
pub const PER_FILE_ROW: &str = "Overall (per-file mean)";

/// One CSV line: the accuracy rows carry a question count, the P/R/F1 rows
/// leave it empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub row: String,
    pub question_count: Option<usize>,
    pub without_partial: f64,
    pub with_partial: f64,
}

pub fn csv_rows(report: &EvaluationReport) -> Vec<CsvRow> {
    let acc = |name: &str, r: &AccuracyRow| CsvRow {
        row: name.to_string(),
        question_count: Some(r.question_count),
        without_partial: r.accuracy,
        with_partial: r.accuracy_with_partial,
    };
    let prf = |name: &str, a: f64, b: f64| CsvRow {
        row: name.to_string(),
        question_count: None,
        without_partial: a,
        with_partial: b,
    };
    let mut rows: Vec<CsvRow> = report.per_category.iter().map(|(c, r)| acc(c.display_name(), r)).collect();
    rows.push(acc(OVERALL_ROW, &report.overall));
    rows.push(acc(PER_FILE_ROW, &report.overall_per_file_mean));
    let (a, b) = (&report.prf_without_partial, &report.prf_with_partial);
    rows.push(prf("Recall", a.recall, b.recall));
    rows.push(prf("Precision", a.precision, b.precision));
    rows.push(prf("f1-score", a.f1, b.f1));
    rows
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in csv_rows(report) {
                w.serialize(row).expect("csv row serializes");
            }
            w.into_inner().expect("in-memory writer")
        }
        ReportFormat::Text => render_text(report).into_bytes(),
    }
}

pub fn parse_csv_report(bytes: &[u8]) -> Result<Vec<CsvRow>, EvalError> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<Result<Vec<CsvRow>, _>>()
        .map_err(|e| EvalError::Malformed { file: "report.csv".into(), message: e.to_string() })
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn render_text(report: &EvaluationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<26} {:>9} {:>10} {:>14}", "Category", "Questions", "Accuracy", "With partial");
    let mut line = |name: &str, r: &AccuracyRow| {
        let _ = writeln!(
            s,
            "{:<26} {:>9} {:>10} {:>14}",
            name,
            r.question_count,
            pct(r.accuracy),
            pct(r.accuracy_with_partial)
        );
    };
    for (c, r) in &report.per_category {
        line(c.display_name(), r);
    }
    line(OVERALL_ROW, &report.overall);
    let _ = writeln!(
        s,
        "\nPer-file mean: {} / {} with partial over {} files",
        pct(report.overall_per_file_mean.accuracy),
        pct(report.overall_per_file_mean.accuracy_with_partial),
        report.corpus.len()
    );
    let _ = writeln!(s, "\n{:<12} {:>16} {:>16}", "", "Without Partial", "Includes Partial");
    let (a, b) = (&report.prf_without_partial, &report.prf_with_partial);
    for (name, x, y) in [("Recall", a.recall, b.recall), ("Precision", a.precision, b.precision), ("f1-score", a.f1, b.f1)] {
        let _ = writeln!(s, "{name:<12} {x:>16.2} {y:>16.2}");
    }
    if a.degenerate || b.degenerate {
        let _ = writeln!(s, "(a zero denominator occurred; affected values are reported as 0)");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselinePhase {
    /// category → [question count, accuracy, accuracy with partial]
    pub categories: BTreeMap<Category, (usize, f64, f64)>,
    pub overall: (usize, f64, f64),
    pub prf_without_partial: BaselinePrf,
    pub prf_with_partial: BaselinePrf,
}

/// Figures reported for the original hosted-model deployment. For display
/// next to local results; they are not reproducible offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedBaseline {
    pub description: String,
    pub phase1: BaselinePhase,
    pub phase2: BaselinePhase,
}

impl PublishedBaseline {
    pub fn bundled() -> Self {
        serde_json::from_str(BASELINE).expect("bundled baseline is valid")
    }

    pub fn phase(&self, phase: u8) -> Option<&BaselinePhase> {
        match phase {
            1 => Some(&self.phase1),
            2 => Some(&self.phase2),
            _ => None,
        }
    }
}

pub fn render_baseline(phase: &BaselinePhase) -> String {
    let mut s = String::from("Published reference figures (original deployment, display only)\n");
    for (c, (n, a, b)) in &phase.categories {
        let _ = writeln!(s, "{:<26} {:>9} {:>10} {:>14}", c.display_name(), n, pct(*a), pct(*b));
    }
    let (n, a, b) = phase.overall;
    let _ = writeln!(s, "{:<26} {:>9} {:>10} {:>14}", OVERALL_ROW, n, pct(a), pct(b));
    let (x, y) = (&phase.prf_without_partial, &phase.prf_with_partial);
    let _ = writeln!(s, "Recall {:.2}/{:.2}  Precision {:.2}/{:.2}  f1 {:.2}/{:.2}", x.recall, y.recall, x.precision, y.precision, x.f1, y.f1);
    s
}
