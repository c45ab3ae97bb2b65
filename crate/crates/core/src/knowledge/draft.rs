//! Draft knowledge-model generation: one entry per Phase-1 question, answered
//! from the syllabus chunks and left for instructor review.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bank::QuestionBank;
use super::model::{KnowledgeEntry, KnowledgeModel};
use crate::gateway::LanguageModelGateway;
use crate::ingest::DocumentChunk;
use crate::qa::retrieval::{extract_from_chunks, RetrievalConfig};
use crate::NOT_FOUND;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DraftConfig {
    pub retrieval: RetrievalConfig,
}

/// A question whose answer could not be produced because the gateway failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftFailure {
    pub question: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub model: KnowledgeModel,
    pub failures: Vec<DraftFailure>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DraftError {
    #[error("no syllabus chunks to draft from")]
    NoChunks,
}

pub fn generate_draft_model<G: LanguageModelGateway + ?Sized>(
    course_id: &str,
    chunks: &[DocumentChunk],
    bank: &QuestionBank,
    gateway: &G,
    config: &DraftConfig,
) -> Result<Draft, DraftError> {
    if chunks.is_empty() {
        return Err(DraftError::NoChunks);
    }
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for question in bank.phase1() {
        let answer = match extract_from_chunks(&question.canonical, chunks, gateway, &config.retrieval) {
            Ok(Some(extraction)) => extraction.answer,
            Ok(None) => NOT_FOUND.to_string(),
            Err(e) => {
                tracing::warn!(question = %question.canonical, error = %e, "draft extraction failed");
                failures.push(DraftFailure { question: question.canonical.clone(), error: e.to_string() });
                NOT_FOUND.to_string()
            }
        };
        entries.push(KnowledgeEntry::draft(question.canonical.clone(), answer, question.element.clone()));
    }
    Ok(Draft { model: KnowledgeModel::new_draft(course_id, entries), failures })
}
