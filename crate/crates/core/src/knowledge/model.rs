use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bank::QuestionBank;
use super::jsonl::QaRecord;
use super::schema::SchemaElement;

/// The literal shown to reviewers in place of a grade.
pub const PLACEHOLDER: &str = "Change this to TRUE or FALSE or PARTIAL";

/// A reviewer's judgement of one answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Grade {
    True,
    False,
    Partial,
}

impl Grade {
    pub fn as_str(self) -> &'static str {
        match self {
            Grade::True => "TRUE",
            Grade::False => "FALSE",
            Grade::Partial => "PARTIAL",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grade {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TRUE" => Ok(Grade::True),
            "FALSE" => Ok(Grade::False),
            "PARTIAL" => Ok(Grade::Partial),
            other => Err(format!("`{other}` is not TRUE, FALSE or PARTIAL")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verification {
    Draft,
    True,
    False,
    Partial,
}

impl Verification {
    pub fn grade(self) -> Option<Grade> {
        match self {
            Verification::Draft => None,
            Verification::True => Some(Grade::True),
            Verification::False => Some(Grade::False),
            Verification::Partial => Some(Grade::Partial),
        }
    }

    /// The `isTrue` field value.
    pub fn as_field(self) -> &'static str {
        match self.grade() {
            None => PLACEHOLDER,
            Some(g) => g.as_str(),
        }
    }

    pub fn from_field(s: &str) -> Option<Self> {
        if s == PLACEHOLDER {
            return Some(Verification::Draft);
        }
        s.parse::<Grade>().ok().map(Verification::from)
    }
}

impl From<Grade> for Verification {
    fn from(g: Grade) -> Self {
        match g {
            Grade::True => Verification::True,
            Grade::False => Verification::False,
            Grade::Partial => Verification::Partial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub question: String,
    pub answer: String,
    pub verification: Verification,
    pub corrected_answer: Option<String>,
    pub element: SchemaElement,
}

impl KnowledgeEntry {
    pub fn draft(question: impl Into<String>, answer: impl Into<String>, element: SchemaElement) -> Self {
        Self {
            question: question.into(),
            answer: answer.into(),
            verification: Verification::Draft,
            corrected_answer: None,
            element,
        }
    }

    /// What a reviewer sees in the `ANSWER` field: the correction for FALSE
    /// entries, the stored answer otherwise.
    pub fn display_answer(&self) -> &str {
        match (self.verification, &self.corrected_answer) {
            (Verification::False, Some(fix)) => fix,
            _ => &self.answer,
        }
    }

    /// The answer students receive; `None` while unreviewed.
    pub fn served_answer(&self) -> Option<&str> {
        match self.verification {
            Verification::Draft => None,
            _ => Some(self.display_answer()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelStatus {
    Draft,
    Published,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeModel {
    pub course_id: String,
    pub entries: Vec<KnowledgeEntry>,
    pub version: u64,
    pub status: ModelStatus,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("questions not in the bank: {}", .0.join("; "))]
    UnknownQuestions(Vec<String>),
    #[error("FALSE entries need a corrected answer: {}", .0.join("; "))]
    MissingCorrection(Vec<String>),
}

impl KnowledgeModel {
    pub fn new_draft(course_id: impl Into<String>, entries: Vec<KnowledgeEntry>) -> Self {
        Self { course_id: course_id.into(), entries, version: 1, status: ModelStatus::Draft }
    }

    /// Builds a draft model from review-format records, resolving each question's
    /// element through the bank.
    pub fn from_records(
        course_id: impl Into<String>,
        records: Vec<QaRecord>,
        bank: &QuestionBank,
    ) -> Result<Self, ModelError> {
        let mut unknown = Vec::new();
        let mut entries = Vec::with_capacity(records.len());
        for r in records {
            let Some(group) = bank.lookup(&r.question) else {
                unknown.push(r.question);
                continue;
            };
            let corrected = (r.is_true == Verification::False).then(|| r.answer.clone());
            entries.push(KnowledgeEntry {
                question: r.question,
                answer: r.answer,
                verification: r.is_true,
                corrected_answer: corrected,
                element: group.element.clone(),
            });
        }
        if !unknown.is_empty() {
            return Err(ModelError::UnknownQuestions(unknown));
        }
        Ok(Self::new_draft(course_id, entries))
    }

    pub fn entry(&self, question: &str) -> Option<&KnowledgeEntry> {
        self.entries.iter().find(|e| e.question == question)
    }

    pub fn draft_questions(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.verification == Verification::Draft)
            .map(|e| e.question.as_str())
            .collect()
    }
}

/// One reviewer decision, keyed by question text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEdit {
    pub question: String,
    pub verification: Grade,
    pub new_answer: Option<String>,
}

impl ReviewEdit {
    pub fn new(question: impl Into<String>, verification: Grade, new_answer: Option<&str>) -> Self {
        Self {
            question: question.into(),
            verification,
            new_answer: new_answer.map(str::to_owned),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReviewError {
    #[error("edits reference questions not in the model: {}", .0.join("; "))]
    Unmatched(Vec<String>),
    #[error("FALSE edits must carry a corrected answer: {}", .0.join("; "))]
    MissingCorrection(Vec<String>),
}

/// Applies reviewer edits, producing a new draft. The input is untouched; either
/// every edit applies or none does.
pub fn apply_review(model: &KnowledgeModel, edits: &[ReviewEdit]) -> Result<KnowledgeModel, ReviewError> {
    let unmatched: Vec<String> = edits
        .iter()
        .filter(|e| model.entry(&e.question).is_none())
        .map(|e| e.question.clone())
        .collect();
    if !unmatched.is_empty() {
        return Err(ReviewError::Unmatched(unmatched));
    }
    let missing: Vec<String> = edits
        .iter()
        .filter(|e| e.verification == Grade::False && e.new_answer.is_none())
        .map(|e| e.question.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ReviewError::MissingCorrection(missing));
    }

    let mut next = model.clone();
    next.status = ModelStatus::Draft;
    for edit in edits {
        let entry = next
            .entries
            .iter_mut()
            .find(|e| e.question == edit.question)
            .expect("matched above");
        entry.verification = edit.verification.into();
        match edit.verification {
            Grade::False => entry.corrected_answer = edit.new_answer.clone(),
            Grade::True | Grade::Partial => {
                if let Some(answer) = &edit.new_answer {
                    entry.answer = answer.clone();
                }
                entry.corrected_answer = None;
            }
        }
    }
    Ok(next)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PublishError {
    #[error("unreviewed entries remain: {}", .0.join("; "))]
    DraftEntries(Vec<String>),
}

/// Promotes a fully reviewed model. The new version is strictly greater than
/// both the model's own version and `last_published`.
pub fn publish(model: &KnowledgeModel, last_published: Option<u64>) -> Result<KnowledgeModel, PublishError> {
    let pending = model.draft_questions();
    if !pending.is_empty() {
        return Err(PublishError::DraftEntries(pending.into_iter().map(str::to_owned).collect()));
    }
    let mut published = model.clone();
    published.version = model.version.max(last_published.unwrap_or(0)) + 1;
    published.status = ModelStatus::Published;
    Ok(published)
}

/// Every published version of one course's model, oldest first.
#[derive(Debug, Clone, Default)]
pub struct ModelHistory {
    versions: Vec<Arc<KnowledgeModel>>,
}

impl ModelHistory {
    pub fn publish(&mut self, model: &KnowledgeModel) -> Result<Arc<KnowledgeModel>, PublishError> {
        let published = Arc::new(publish(model, self.latest_version())?);
        self.versions.push(Arc::clone(&published));
        Ok(published)
    }

    pub fn latest(&self) -> Option<&Arc<KnowledgeModel>> {
        self.versions.last()
    }

    pub fn latest_version(&self) -> Option<u64> {
        self.latest().map(|m| m.version)
    }

    pub fn get(&self, version: u64) -> Option<&Arc<KnowledgeModel>> {
        self.versions.iter().find(|m| m.version == version)
    }

    pub fn versions(&self) -> impl Iterator<Item = u64> + '_ {
        self.versions.iter().map(|m| m.version)
    }
}
