//! Chat logs and their export as a fine-tuning dataset.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::Answer;
use crate::knowledge::LineDiagnostic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub turn_id: u64,
    pub course_id: String,
    pub channel_id: String,
    pub question: String,
    pub answer: Answer,
    pub asked_at: DateTime<Utc>,
    pub answered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneRecord {
    pub question: String,
    pub served_answer: String,
    /// `false` marks turns that need triage.
    pub found: bool,
}

/// One JSONL line per turn asked at or after `since`, oldest first.
pub fn export_finetune_dataset(turns: &[ChatTurn], since: Option<DateTime<Utc>>) -> String {
    let mut selected: Vec<&ChatTurn> = turns.iter().filter(|t| since.map_or(true, |s| t.asked_at >= s)).collect();
    selected.sort_by_key(|t| (t.asked_at, t.turn_id));
    let mut out = String::new();
    for t in selected {
        let record = FinetuneRecord { question: t.question.clone(), served_answer: t.answer.text.clone(), found: t.answer.found };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_finetune_dataset(input: &str) -> Result<Vec<FinetuneRecord>, Vec<LineDiagnostic>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(LineDiagnostic { line: i + 1, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(errors)
    }
}
