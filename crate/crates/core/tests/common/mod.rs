#![allow(dead_code)]

use std::sync::Arc;

use vta_core::gateway::reference::ReferenceBackend;
use vta_core::ingest::{DocumentChunk, SyllabusDocument, DEFAULT_MAX_CHARS};
use vta_core::knowledge::{
    apply_review, generate_draft_model, publish, DraftConfig, Grade, KnowledgeModel, QuestionBank, ReviewEdit,
};
use vta_core::NOT_FOUND;

pub fn fixture(name: &str) -> String {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn bank() -> Arc<QuestionBank> {
    Arc::new(QuestionBank::bundled())
}

pub fn reference(bank: &QuestionBank) -> ReferenceBackend {
    ReferenceBackend::bundled(bank)
}

pub fn ingest(course: &str, name: &str) -> (SyllabusDocument, Vec<DocumentChunk>) {
    let doc = SyllabusDocument::new(course, name, &fixture(name)).unwrap();
    let chunks = doc.chunks(DEFAULT_MAX_CHARS).unwrap();
    (doc, chunks)
}

pub fn draft(course: &str, name: &str) -> (KnowledgeModel, Vec<DocumentChunk>, SyllabusDocument) {
    let bank = bank();
    let (doc, chunks) = ingest(course, name);
    let d = generate_draft_model(course, &chunks, &bank, &reference(&bank), &DraftConfig::default()).unwrap();
    (d.model, chunks, doc)
}

/// Marks every entry TRUE except the course name, which is corrected the way a
/// reviewer would.
pub fn reviewed_and_published(model: &KnowledgeModel) -> KnowledgeModel {
    let edits: Vec<ReviewEdit> = model
        .entries
        .iter()
        .map(|e| {
            if e.question == "What is the name of the course?" {
                ReviewEdit::new(&e.question, Grade::False, Some("Introduction to Business"))
            } else {
                ReviewEdit::new(&e.question, Grade::True, None)
            }
        })
        .collect();
    publish(&apply_review(model, &edits).unwrap(), None).unwrap()
}

/// "The label is value." → value.
pub fn labelled_value(answer: &str) -> Option<&str> {
    if answer == NOT_FOUND {
        return None;
    }
    let rest = answer.strip_prefix("The ")?;
    let at = rest.find(" is ").map(|i| i + 4).or_else(|| rest.find(" are ").map(|i| i + 5))?;
    Some(rest[at..].trim_end_matches('.'))
}

pub fn word_set(text: &str) -> std::collections::BTreeSet<String> {
    vta_core::text::content_tokens(text)
}
