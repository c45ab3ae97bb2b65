//! Accuracy and multiclass precision/recall/F1.
//!
//! Record to confusion-count mapping:
//! - TRUE: true positive.
//! - FALSE whose answer is "Response not found": false negative (the bot
//!   missed an answer the syllabus has).
//! - any other FALSE: false positive (a wrong answer was emitted).
//! - PARTIAL: counted separately; true positive when partials are included,
//!   false positive otherwise.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::grading::GradedRecord;
use super::EvalError;
use crate::knowledge::{Category, Grade};
use crate::NOT_FOUND;

/// How one graded record counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    FalseNegative,
    Partial,
}

pub fn classify(record: &GradedRecord) -> Outcome {
    match record.grade {
        Grade::True => Outcome::TruePositive,
        Grade::Partial => Outcome::Partial,
        Grade::False if record.answer.trim() == NOT_FOUND => Outcome::FalseNegative,
        Grade::False => Outcome::FalsePositive,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTally {
    /// Distinct questions (classes).
    pub n: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub partial: u64,
}

impl ConfusionTally {
    pub fn from_records(records: &[GradedRecord]) -> Self {
        let mut tally = Self {
            n: records.iter().map(|r| r.question.as_str()).collect::<BTreeSet<_>>().len(),
            ..Self::default()
        };
        for r in records {
            match classify(r) {
                Outcome::TruePositive => tally.tp += 1,
                Outcome::FalsePositive => tally.fp += 1,
                Outcome::FalseNegative => tally.fn_ += 1,
                Outcome::Partial => tally.partial += 1,
            }
        }
        tally
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.partial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// A denominator was zero and the affected value was set to 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_prf(tally: &ConfusionTally, include_partial: bool) -> Prf {
    let (tp, fp) = if include_partial {
        (tally.tp + tally.partial, tally.fp)
    } else {
        (tally.tp, tally.fp + tally.partial)
    };
    let mut degenerate = false;
    let precision = ratio(tp, tp + fp, &mut degenerate);
    let recall = ratio(tp, tp + tally.fn_, &mut degenerate);
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1, degenerate }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBreakdown {
    pub per_category: BTreeMap<Category, f64>,
    pub records_per_category: BTreeMap<Category, usize>,
    pub overall: f64,
}

/// Correct answers over records, per category and pooled over all records.
pub fn compute_accuracy(records: &[GradedRecord], include_partial: bool) -> Result<AccuracyBreakdown, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let correct = |r: &GradedRecord| r.grade == Grade::True || (include_partial && r.grade == Grade::Partial);
    let mut counts: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
    for r in records {
        let c = counts.entry(r.category).or_default();
        c.0 += usize::from(correct(r));
        c.1 += 1;
    }
    let total_correct: usize = counts.values().map(|c| c.0).sum();
    Ok(AccuracyBreakdown {
        per_category: counts.iter().map(|(k, (ok, n))| (*k, *ok as f64 / *n as f64)).collect(),
        records_per_category: counts.iter().map(|(k, (_, n))| (*k, *n)).collect(),
        overall: total_correct as f64 / records.len() as f64,
    })
}
