//! Two-phase evaluation: draft review templates over a corpus (Phase 1),
//! answering the augmented question set over corrected models (Phase 2), and
//! accuracy and P/R/F1 reporting over graded files.

pub mod grading;
pub mod metrics;
pub mod report;
pub mod runs;

use thiserror::Error;

pub use grading::{ingest_graded, GradedRecord};
pub use metrics::{classify, compute_accuracy, compute_prf, AccuracyBreakdown, ConfusionTally, Outcome, Prf};
pub use report::{
    build_report, csv_rows, parse_csv_report, render_baseline, render_report, AccuracyRow, CsvRow, EvaluationReport,
    PublishedBaseline, ReportFormat,
};
pub use runs::{
    auto_grade, load_corpus, output_name, run_phase1, run_phase2, sha256_hex, CorpusFile, Phase2Course, RunConfig,
    RunManifest, RunOutput, RunSummary,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no graded records")]
    NoRecords,
    #[error("{file}: line {line} ungraded")]
    Ungraded { file: String, line: usize },
    #[error("{file}: line {line}: question `{question}` is not in the bank")]
    UnknownQuestion { file: String, line: usize, question: String },
    #[error("{file}: {message}")]
    Malformed { file: String, message: String },
    #[error("{0}")]
    Io(String),
}
