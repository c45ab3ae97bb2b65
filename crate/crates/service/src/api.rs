//! Request and response bodies of the HTTP API.

use serde::{Deserialize, Serialize};
use vta_core::gateway::{LanguageTag, Sentiment};
use vta_core::knowledge::{DraftFailure, SchemaElement};
use vta_core::qa::{Answer, AnswerSource};

use crate::store::{ChannelKind, DraftRecord, DraftStatus, Role};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateUserRequest {
    pub role: Role,
    pub display_name: String,
}

/// The token is shown once, here, and never again.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateUserResponse {
    pub user_id: String,
    pub role: Role,
    pub display_name: String,
    pub token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateCourseRequest {
    pub course_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftSummary {
    pub course_id: String,
    pub draft_id: String,
    pub status: DraftStatus,
    pub entries: usize,
    pub found: usize,
    pub not_found: usize,
    /// Entries still awaiting review.
    pub pending: usize,
    pub failures: Vec<DraftFailure>,
    pub error: Option<String>,
}

impl DraftSummary {
    pub fn of(course_id: &str, draft: &DraftRecord) -> Self {
        let entries = draft.model.as_ref().map_or(&[][..], |m| &m.entries[..]);
        let not_found = entries.iter().filter(|e| e.display_answer() == vta_core::NOT_FOUND).count();
        Self {
            course_id: course_id.to_string(),
            draft_id: draft.draft_id.clone(),
            status: draft.status,
            entries: entries.len(),
            found: entries.len() - not_found,
            not_found,
            pending: draft.model.as_ref().map_or(0, |m| m.draft_questions().len()),
            failures: draft.failures.clone(),
            error: draft.error.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublishResponse {
    pub course_id: String,
    pub version: u64,
    pub entries: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AskRequest {
    pub question: String,
    /// A language tag, or `auto` (the default) to detect it.
    #[serde(default)]
    pub lang: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub turn_id: u64,
    pub answer: String,
    pub message: String,
    pub found: bool,
    pub partial_flag: bool,
    pub sentiment: Sentiment,
    pub model_version: u64,
    pub latency_ms: u64,
    pub source: AnswerSource,
    pub lang: LanguageTag,
    pub degraded: bool,
    pub matched_element: Option<SchemaElement>,
}

impl AskResponse {
    pub fn new(turn_id: u64, a: Answer) -> Self {
        Self {
            turn_id,
            answer: a.text,
            message: a.message,
            found: a.found,
            partial_flag: a.partial_flag,
            sentiment: a.sentiment,
            model_version: a.model_version,
            latency_ms: a.latency_ms,
            source: a.source,
            lang: a.lang,
            degraded: a.degraded,
            matched_element: a.matched_element,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterChannelRequest {
    pub course_id: String,
    pub kind: ChannelKind,
    #[serde(default)]
    pub callback_url: Option<String>,
    #[serde(default)]
    pub shared_secret: Option<String>,
}

/// Inbound message on a channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelMessage {
    pub user: String,
    pub text: String,
    #[serde(default)]
    pub lang: Option<String>,
}

/// What a channel receives for each inbound message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboundMessage {
    pub channel_id: String,
    pub course_id: String,
    pub user: String,
    pub question: String,
    #[serde(flatten)]
    pub reply: AskResponse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PollResponse {
    pub messages: Vec<OutboundMessage>,
}
