//! Search-then-complete over syllabus chunks, shared by draft generation and
//! the runtime chunk fallback.

use serde::{Deserialize, Serialize};

use crate::gateway::{Extraction, GatewayError, LanguageModelGateway};
use crate::ingest::DocumentChunk;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Chunks passed to extraction.
    pub top_k: usize,
    /// Following chunks appended to each ranked chunk, so a label and its
    /// value split across a chunk boundary still reach the extractor.
    pub context_neighbors: usize,
    /// Minimum extraction confidence to accept an answer.
    pub tau_extract: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { top_k: 3, context_neighbors: 1, tau_extract: 0.25 }
    }
}

/// Ranks `chunks` for `question`, extracts from the best ones and returns the
/// extraction if it was found with enough confidence.
pub fn extract_from_chunks<G: LanguageModelGateway + ?Sized>(
    question: &str,
    chunks: &[DocumentChunk],
    gateway: &G,
    config: &RetrievalConfig,
) -> Result<Option<Extraction>, GatewayError> {
    if chunks.is_empty() {
        return Ok(None);
    }
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let ranked = gateway.rank(question, &texts, config.top_k.max(1))?;
    let documents: Vec<String> = ranked
        .iter()
        .filter(|r| r.score > 0.0)
        .map(|r| {
            let end = (r.index + 1 + config.context_neighbors).min(texts.len());
            texts[r.index..end].join(" ")
        })
        .collect();
    if documents.is_empty() {
        return Ok(None);
    }
    let extraction = gateway.extract(question, &documents)?;
    Ok((extraction.found && extraction.confidence >= config.tau_extract).then_some(extraction))
}
