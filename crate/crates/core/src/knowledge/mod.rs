//! Syllabus schema, competency questions, knowledge models and the
//! review/publish workflow.

pub mod bank;
pub mod draft;
pub mod jsonl;
pub mod model;
pub mod schema;

pub use bank::{load_question_bank, BankError, BankQuestion, CompetencyQuestion, Phase, QuestionBank, Variant};
pub use draft::{generate_draft_model, Draft, DraftConfig, DraftError, DraftFailure};
pub use jsonl::{
    model_records, parse_numbered_records, parse_records, parse_records_bytes, serialize_model_jsonl,
    serialize_records, JsonlError, LineDiagnostic, QaRecord,
};
pub use model::{
    apply_review, publish, Grade, KnowledgeEntry, KnowledgeModel, ModelError, ModelHistory, ModelStatus,
    PublishError, ReviewEdit, ReviewError, Verification, PLACEHOLDER,
};
pub use schema::{Category, SchemaElement, SCHEMA};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelParseError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Parses a review-format file into a draft model for `course_id`.
pub fn parse_model_jsonl(course_id: &str, input: &[u8], bank: &QuestionBank) -> Result<KnowledgeModel, ModelParseError> {
    let records = parse_records_bytes(input)?;
    Ok(KnowledgeModel::from_records(course_id, records, bank)?)
}

/// The edits that turn `model` into the reviewed `records`: one per record
/// whose grade or answer differs from the matching entry. Records for
/// questions not in the model are returned as edits too, so that
/// [`apply_review`] reports them as unmatched.
pub fn edits_from_records(model: &KnowledgeModel, records: &[QaRecord]) -> Result<Vec<ReviewEdit>, Vec<String>> {
    let mut edits = Vec::new();
    let mut ungraded = Vec::new();
    for r in records {
        let Some(grade) = r.is_true.grade() else {
            if model.entry(&r.question).map_or(true, |e| e.display_answer() != r.answer) {
                ungraded.push(r.question.clone());
            }
            continue;
        };
        let unchanged = model
            .entry(&r.question)
            .is_some_and(|e| e.verification.grade() == Some(grade) && e.display_answer() == r.answer);
        if unchanged {
            continue;
        }
        let keep_answer = grade != Grade::False
            && model.entry(&r.question).is_some_and(|e| e.answer == r.answer);
        edits.push(ReviewEdit::new(
            r.question.clone(),
            grade,
            (!keep_answer).then_some(r.answer.as_str()),
        ));
    }
    if ungraded.is_empty() {
        Ok(edits)
    } else {
        Err(ungraded)
    }
}
