//! Question answering over a published knowledge model.
//!
//! A question is translated to English, matched against the model's entries
//! (each entry's question plus every bank phrasing of it), and, failing a
//! confident match, answered by ranking syllabus chunks and extracting from
//! the best ones. Anything else is "Response not found". The answer is
//! translated back and framed according to the question's sentiment.

pub mod cache;
pub mod compose;
pub mod export;
pub mod retrieval;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{AnswerCache, CacheKey};
pub use compose::{compose_response, SupportTemplates};
pub use export::{export_finetune_dataset, parse_finetune_dataset, ChatTurn, FinetuneRecord};
pub use retrieval::{extract_from_chunks, RetrievalConfig};

use crate::gateway::{GatewayError, LanguageModelGateway, LanguageTag, Sentiment, SourceLanguage};
use crate::ingest::DocumentChunk;
use crate::knowledge::{KnowledgeEntry, KnowledgeModel, QuestionBank, SchemaElement, Verification};
use crate::text::{content_tokens, jaccard, normalize_question};
use crate::NOT_FOUND;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QaConfig {
    /// Minimum question similarity to serve a knowledge-model entry.
    pub tau_model: f64,
    pub retrieval: RetrievalConfig,
    pub cache_capacity: usize,
    pub cache_ttl_secs: u64,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self { tau_model: 0.5, retrieval: RetrievalConfig::default(), cache_capacity: 1024, cache_ttl_secs: 600 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QaError {
    #[error("question is empty")]
    EmptyQuestion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub text: String,
    pub lang: SourceLanguage,
    pub course_id: String,
    pub channel: String,
    pub asked_at: DateTime<Utc>,
}

impl Question {
    /// An English question on the `api` channel.
    pub fn new(course_id: impl Into<String>, text: impl Into<String>) -> Result<Self, QaError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(QaError::EmptyQuestion);
        }
        Ok(Self {
            text,
            lang: SourceLanguage::default(),
            course_id: course_id.into(),
            channel: "api".into(),
            asked_at: Utc::now(),
        })
    }

    pub fn with_lang(mut self, lang: SourceLanguage) -> Self {
        self.lang = lang;
        self
    }

    pub fn with_channel(mut self, channel: impl Into<String>) -> Self {
        self.channel = channel.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnswerSource {
    KnowledgeModel,
    ChunkFallback,
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    /// The answer itself, in `lang`. "Response not found" (or its
    /// translation) when nothing was found.
    pub text: String,
    /// `text` with sentiment framing; what a chat channel should display.
    pub message: String,
    pub found: bool,
    /// The served entry was graded PARTIAL and may be incomplete.
    pub partial_flag: bool,
    pub sentiment: Sentiment,
    pub source: AnswerSource,
    pub matched_element: Option<SchemaElement>,
    pub model_version: u64,
    pub lang: LanguageTag,
    /// Some gateway call failed; the answer may be less helpful than usual.
    pub degraded: bool,
    pub latency_ms: u64,
}

impl Answer {
    /// Field-by-field equality ignoring latency.
    pub fn same_as(&self, other: &Answer) -> bool {
        Answer { latency_ms: 0, ..self.clone() } == Answer { latency_ms: 0, ..other.clone() }
    }
}

/// An immutable published model together with the chunks it was built from.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub model: Arc<KnowledgeModel>,
    pub chunks: Arc<Vec<DocumentChunk>>,
}

impl Snapshot {
    pub fn new(model: KnowledgeModel, chunks: Vec<DocumentChunk>) -> Self {
        Self { model: Arc::new(model), chunks: Arc::new(chunks) }
    }
}

/// The live snapshot per course. Readers clone an `Arc` and keep answering
/// from it while a publish swaps in the next one.
#[derive(Default)]
pub struct SnapshotRegistry {
    live: RwLock<HashMap<String, Arc<Snapshot>>>,
}

impl SnapshotRegistry {
    pub fn get(&self, course_id: &str) -> Option<Arc<Snapshot>> {
        self.live.read().get(course_id).cloned()
    }

    pub fn install(&self, course_id: &str, snapshot: Snapshot) -> Arc<Snapshot> {
        let snapshot = Arc::new(snapshot);
        self.live.write().insert(course_id.to_string(), Arc::clone(&snapshot));
        snapshot
    }
}

fn is_backend_failure(e: &GatewayError) -> bool {
    !matches!(e, GatewayError::UnsupportedLanguage(_) | GatewayError::InvalidRequest(_))
}

pub struct QaEngine<G> {
    gateway: G,
    bank: Arc<QuestionBank>,
    config: QaConfig,
    templates: SupportTemplates,
    cache: AnswerCache,
}

impl<G: LanguageModelGateway> QaEngine<G> {
    pub fn new(gateway: G, bank: Arc<QuestionBank>, config: QaConfig) -> Self {
        let cache = AnswerCache::new(config.cache_capacity, Duration::from_secs(config.cache_ttl_secs));
        Self { gateway, bank, config, templates: SupportTemplates::bundled(), cache }
    }

    pub fn with_templates(mut self, templates: SupportTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn gateway(&self) -> &G {
        &self.gateway
    }

    pub fn bank(&self) -> &QuestionBank {
        &self.bank
    }

    pub fn config(&self) -> &QaConfig {
        &self.config
    }

    pub fn cache(&self) -> &AnswerCache {
        &self.cache
    }

    /// The reviewed entry whose question, or any bank phrasing of it, is most
    /// similar to `question`. Ties go to the earlier entry. Unreviewed entries
    /// are never matched.
    pub fn match_entry<'m>(&self, question: &str, model: &'m KnowledgeModel) -> Option<(&'m KnowledgeEntry, f64)> {
        let q = content_tokens(question);
        let mut best: Option<(&KnowledgeEntry, f64)> = None;
        for entry in model.entries.iter().filter(|e| e.verification != Verification::Draft) {
            let mut score = jaccard(&q, &content_tokens(&entry.question));
            if let Some(group) = self.bank.lookup(&entry.question) {
                for phrasing in group.all_phrasings() {
                    score = score.max(jaccard(&q, &content_tokens(phrasing)));
                }
            }
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((entry, score));
            }
        }
        best.filter(|(_, s)| *s > 0.0)
    }

    /// Runs the full pipeline without the cache. Total: gateway failures turn
    /// into a not-found or untranslated answer with `degraded` set.
    pub fn answer_question(&self, q: &Question, model: &KnowledgeModel, chunks: &[DocumentChunk]) -> Answer {
        let started = Instant::now();
        let english = LanguageTag::english();
        let mut degraded = false;

        let (pivot, user_lang) = match &q.lang {
            SourceLanguage::Tag(t) if t.is_english() => (q.text.clone(), english.clone()),
            lang => match self.gateway.translate(&q.text, lang, &english) {
                Ok(t) => (t.text, t.detected_lang),
                Err(e) => {
                    tracing::warn!(error = %e, "question translation failed, answering in English");
                    degraded |= is_backend_failure(&e);
                    (q.text.clone(), english.clone())
                }
            },
        };

        let sentiment = self.gateway.sentiment(&pivot).unwrap_or_else(|e| {
            tracing::warn!(error = %e, "sentiment failed");
            degraded = true;
            Sentiment::Neutral
        });

        let mut text = NOT_FOUND.to_string();
        let mut source = AnswerSource::NotFound;
        let mut partial_flag = false;
        let mut matched_element = None;

        let matched = self.match_entry(&pivot, model).filter(|(_, s)| *s >= self.config.tau_model);
        if let Some((entry, _)) = matched {
            let served = entry.served_answer().expect("draft entries are never matched");
            matched_element = Some(entry.element.clone());
            if served != NOT_FOUND {
                text = served.to_string();
                source = AnswerSource::KnowledgeModel;
                partial_flag = entry.verification == Verification::Partial;
            }
        } else {
            match extract_from_chunks(&pivot, chunks, &self.gateway, &self.config.retrieval) {
                Ok(Some(extraction)) if extraction.answer != NOT_FOUND => {
                    text = extraction.answer;
                    source = AnswerSource::ChunkFallback;
                    matched_element = self.bank.lookup(&pivot).map(|g| g.element.clone());
                }
                Ok(_) => {}
                Err(e) => {
                    tracing::warn!(error = %e, "chunk fallback failed");
                    degraded = true;
                }
            }
        }

        let mut lang = english.clone();
        if !user_lang.is_english() {
            match self.gateway.translate(&text, &SourceLanguage::Tag(english.clone()), &user_lang) {
                Ok(t) => {
                    text = t.text;
                    lang = user_lang;
                }
                Err(e) => {
                    tracing::warn!(error = %e, "answer translation failed, replying in English");
                    degraded |= is_backend_failure(&e);
                }
            }
        }

        let mut answer = Answer {
            found: source != AnswerSource::NotFound,
            text,
            message: String::new(),
            partial_flag,
            sentiment,
            source,
            matched_element,
            model_version: model.version,
            lang,
            degraded,
            latency_ms: 0,
        };
        answer.message = compose_response(&answer, sentiment, &self.templates, self.support_resources(model));
        answer.latency_ms = started.elapsed().as_millis() as u64;
        answer
    }

    /// The course's reviewed mental health resources answer, if any.
    fn support_resources<'m>(&self, model: &'m KnowledgeModel) -> Option<&'m str> {
        model
            .entries
            .iter()
            .filter(|e| e.element.key == "Mental Health Resources")
            .filter_map(|e| e.served_answer())
            .find(|a| *a != NOT_FOUND)
    }

    pub fn cache_key(&self, q: &Question, model: &KnowledgeModel) -> CacheKey {
        CacheKey {
            course_id: q.course_id.clone(),
            model_version: model.version,
            question: normalize_question(&q.text),
            lang: q.lang.as_key().to_string(),
        }
    }

    /// [`Self::answer_question`] through the cache. Degraded answers are not
    /// cached.
    pub fn cached_answer(&self, q: &Question, snapshot: &Snapshot) -> Answer {
        let key = self.cache_key(q, &snapshot.model);
        if let Some(hit) = self.cache.get(&key) {
            return hit;
        }
        let answer = self.answer_question(q, &snapshot.model, &snapshot.chunks);
        if !answer.degraded {
            self.cache.insert(key, answer.clone());
        }
        answer
    }
}
