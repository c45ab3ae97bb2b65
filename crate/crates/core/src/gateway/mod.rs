//! Language-model capabilities behind one interface.
//!
//! Callers never send raw prompts. They ask for one of four capabilities
//! (extract, rank, translate, sentiment) and any backend implementing
//! [`LanguageModelGateway`] can serve them. Two backends ship:
//! [`reference::ReferenceBackend`], deterministic and offline, and
//! [`http::HttpBackend`], a JSON-over-HTTP completion client.

pub mod http;
pub mod reference;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowercase language tag such as `en` or `es`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageTag(String);

impl LanguageTag {
    pub fn new(tag: &str) -> Self {
        Self(tag.trim().to_ascii_lowercase())
    }

    pub fn english() -> Self {
        Self("en".into())
    }

    pub fn is_english(&self) -> bool {
        self.0 == "en"
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Source language of a text: a known tag or "detect it".
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SourceLanguage {
    Auto,
    Tag(LanguageTag),
}

impl SourceLanguage {
    pub fn as_key(&self) -> &str {
        match self {
            SourceLanguage::Auto => "auto",
            SourceLanguage::Tag(t) => t.as_str(),
        }
    }
}

impl FromStr for SourceLanguage {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s.trim().eq_ignore_ascii_case("auto") || s.trim().is_empty() {
            SourceLanguage::Auto
        } else {
            SourceLanguage::Tag(LanguageTag::new(s))
        })
    }
}

impl Default for SourceLanguage {
    fn default() -> Self {
        SourceLanguage::Tag(LanguageTag::english())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub answer: String,
    pub found: bool,
    pub confidence: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Translation {
    pub text: String,
    pub detected_lang: LanguageTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Capability {
    Extract,
    Rank,
    Translate,
    Sentiment,
}

/// Per-request limits. Payload size is the rendered request body in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    #[serde(with = "duration_ms")]
    pub max_latency: Duration,
    pub max_payload_bytes: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self { max_latency: Duration::from_secs(30), max_payload_bytes: 16 * 1024 }
    }
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend returned HTTP {status}")]
    Http { status: u16 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("unsupported language `{0}`")]
    UnsupportedLanguage(String),
    #[error("request payload of {size} bytes exceeds budget of {limit}")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Timeout | GatewayError::Transport(_) => true,
            GatewayError::Http { status } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait LanguageModelGateway: Send + Sync {
    fn provenance(&self) -> Provenance;

    /// Languages `translate` accepts, English included.
    fn supported_languages(&self) -> Vec<LanguageTag>;

    /// Answers `question` from `documents` only. `found == false` means the
    /// answer is the not-found sentinel; backend trouble is an `Err` instead.
    fn extract(&self, question: &str, documents: &[String]) -> Result<Extraction, GatewayError>;

    /// At most `k` documents by descending score in [0, 1], ties by ascending index.
    fn rank(&self, query: &str, documents: &[String], k: usize) -> Result<Vec<RankedDocument>, GatewayError>;

    fn translate(
        &self,
        text: &str,
        from: &SourceLanguage,
        to: &LanguageTag,
    ) -> Result<Translation, GatewayError>;

    fn sentiment(&self, text: &str) -> Result<Sentiment, GatewayError>;
}

/// Sorts by score descending then index ascending and keeps `k`.
pub fn order_ranking(mut ranked: Vec<RankedDocument>, k: usize) -> Vec<RankedDocument> {
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    ranked.truncate(k);
    ranked
}

/// Wraps a gateway and counts calls per capability.
pub struct InstrumentedGateway<G> {
    inner: G,
    calls: [AtomicUsize; 4],
}

impl<G> InstrumentedGateway<G> {
    pub fn new(inner: G) -> Self {
        Self { inner, calls: Default::default() }
    }

    pub fn calls(&self, capability: Capability) -> usize {
        self.calls[capability as usize].load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.iter().map(|c| c.load(Ordering::SeqCst)).sum()
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }

    fn count(&self, capability: Capability) {
        self.calls[capability as usize].fetch_add(1, Ordering::SeqCst);
    }
}

impl<G: LanguageModelGateway> LanguageModelGateway for InstrumentedGateway<G> {
    fn provenance(&self) -> Provenance {
        self.inner.provenance()
    }

    fn supported_languages(&self) -> Vec<LanguageTag> {
        self.inner.supported_languages()
    }

    fn extract(&self, question: &str, documents: &[String]) -> Result<Extraction, GatewayError> {
        self.count(Capability::Extract);
        self.inner.extract(question, documents)
    }

    fn rank(&self, query: &str, documents: &[String], k: usize) -> Result<Vec<RankedDocument>, GatewayError> {
        self.count(Capability::Rank);
        self.inner.rank(query, documents, k)
    }

    fn translate(&self, text: &str, from: &SourceLanguage, to: &LanguageTag) -> Result<Translation, GatewayError> {
        self.count(Capability::Translate);
        self.inner.translate(text, from, to)
    }

    fn sentiment(&self, text: &str) -> Result<Sentiment, GatewayError> {
        self.count(Capability::Sentiment);
        self.inner.sentiment(text)
    }
}

macro_rules! forward_gateway {
    ($($ty:ty),*) => {$(
        impl<G: LanguageModelGateway + ?Sized> LanguageModelGateway for $ty {
            fn provenance(&self) -> Provenance {
                (**self).provenance()
            }

            fn supported_languages(&self) -> Vec<LanguageTag> {
                (**self).supported_languages()
            }

            fn extract(&self, question: &str, documents: &[String]) -> Result<Extraction, GatewayError> {
                (**self).extract(question, documents)
            }

            fn rank(&self, query: &str, documents: &[String], k: usize) -> Result<Vec<RankedDocument>, GatewayError> {
                (**self).rank(query, documents, k)
            }

            fn translate(&self, text: &str, from: &SourceLanguage, to: &LanguageTag) -> Result<Translation, GatewayError> {
                (**self).translate(text, from, to)
            }

            fn sentiment(&self, text: &str) -> Result<Sentiment, GatewayError> {
                (**self).sentiment(text)
            }
        }
    )*};
}

forward_gateway!(std::sync::Arc<G>, &G, Box<G>);
