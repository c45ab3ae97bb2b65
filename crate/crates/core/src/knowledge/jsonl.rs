//! The review/evaluation line format:
//! `{"QUESTION":"…","ANSWER":"…","isTrue":"…"}`, one object per LF-terminated line,
//! keys in exactly that order.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use super::model::{KnowledgeModel, Verification};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaRecord {
    pub question: String,
    pub answer: String,
    pub is_true: Verification,
}

impl QaRecord {
    pub fn new(question: impl Into<String>, answer: impl Into<String>, is_true: Verification) -> Self {
        Self { question: question.into(), answer: answer.into(), is_true }
    }
}

#[derive(Serialize)]
struct Line<'a> {
    #[serde(rename = "QUESTION")]
    question: &'a str,
    #[serde(rename = "ANSWER")]
    answer: &'a str,
    #[serde(rename = "isTrue")]
    is_true: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{}", render_diagnostics(.diagnostics))]
pub struct JsonlError {
    pub diagnostics: Vec<LineDiagnostic>,
}

fn render_diagnostics(d: &[LineDiagnostic]) -> String {
    d.iter().map(|d| format!("line {}: {}", d.line, d.message)).collect::<Vec<_>>().join("; ")
}

pub fn serialize_records<'a>(records: impl IntoIterator<Item = &'a QaRecord>) -> String {
    let mut out = String::new();
    for r in records {
        let line = Line { question: &r.question, answer: &r.answer, is_true: r.is_true.as_field() };
        out.push_str(&serde_json::to_string(&line).expect("string fields serialize"));
        out.push('\n');
    }
    out
}

pub fn model_records(model: &KnowledgeModel) -> Vec<QaRecord> {
    model
        .entries
        .iter()
        .map(|e| QaRecord::new(e.question.clone(), e.display_answer(), e.verification))
        .collect()
}

pub fn serialize_model_jsonl(model: &KnowledgeModel) -> String {
    serialize_records(&model_records(model))
}

fn parse_line(raw: &str) -> Result<QaRecord, String> {
    let value: Value = serde_json::from_str(raw).map_err(|e| format!("invalid JSON: {e}"))?;
    let Value::Object(map) = value else {
        return Err("expected a JSON object".into());
    };
    let unknown: Vec<&str> = map
        .keys()
        .map(String::as_str)
        .filter(|k| !matches!(*k, "QUESTION" | "ANSWER" | "isTrue"))
        .collect();
    if !unknown.is_empty() {
        return Err(format!("unknown keys: {}", unknown.join(", ")));
    }
    let field = |key: &str| -> Result<String, String> {
        match map.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("`{key}` must be a string")),
            None => Err(format!("missing key `{key}`")),
        }
    };
    let question = field("QUESTION")?;
    let answer = field("ANSWER")?;
    let flag = field("isTrue")?;
    let is_true = Verification::from_field(&flag)
        .ok_or_else(|| format!("isTrue value `{flag}` is not TRUE, FALSE, PARTIAL or the placeholder"))?;
    Ok(QaRecord { question, answer, is_true })
}

/// Parses review-format lines. Blank lines are skipped; every malformed line
/// is reported.
pub fn parse_records(input: &str) -> Result<Vec<QaRecord>, JsonlError> {
    parse_numbered_records(input).map(|rows| rows.into_iter().map(|(_, r)| r).collect())
}

/// Like [`parse_records`] but keeps each record's 1-based line number.
pub fn parse_numbered_records(input: &str) -> Result<Vec<(usize, QaRecord)>, JsonlError> {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, raw) in input.split('\n').enumerate() {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        match parse_line(raw) {
            Ok(r) => records.push((i + 1, r)),
            Err(message) => diagnostics.push(LineDiagnostic { line: i + 1, message }),
        }
    }
    if diagnostics.is_empty() {
        Ok(records)
    } else {
        Err(JsonlError { diagnostics })
    }
}

pub fn parse_records_bytes(input: &[u8]) -> Result<Vec<QaRecord>, JsonlError> {
    let text = std::str::from_utf8(input).map_err(|e| JsonlError {
        diagnostics: vec![LineDiagnostic {
            line: 1 + input[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
            message: "invalid UTF-8".into(),
        }],
    })?;
    parse_records(text)
}
