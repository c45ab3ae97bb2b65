//! HTTP service for course assistants.
//!
//! Instructors create a course, upload its syllabus, review the generated
//! draft knowledge model and publish it; students then ask questions through
//! `/courses/{id}/ask` or through a registered channel. Every answered
//! question is logged as a chat turn.
//!
//! Publishing swaps the course's live snapshot in one step, so every answer is
//! computed against exactly one model version. Model mutations (upload,
//! review, publish) are serialized per course.

pub mod api;
pub mod auth;
mod channels;
mod courses;
pub mod error;
pub mod signing;
pub mod store;

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;
use vta_core::gateway::LanguageModelGateway;
use vta_core::ingest::DEFAULT_MAX_CHARS;
use vta_core::knowledge::QuestionBank;
use vta_core::qa::{QaConfig, QaEngine, Snapshot, SnapshotRegistry};

use api::OutboundMessage;
use store::{Store, StoreError};

pub use error::ApiError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub max_chars: usize,
    pub qa: QaConfig,
    /// When set, `POST /users` requires it as the bearer token.
    #[serde(skip_serializing)]
    pub admin_token: Option<String>,
    pub delivery_attempts: u32,
    pub delivery_backoff_ms: u64,
    pub delivery_timeout_ms: u64,
    /// Upper bound on a long-poll wait.
    pub max_poll_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_chars: DEFAULT_MAX_CHARS,
            qa: QaConfig::default(),
            admin_token: None,
            delivery_attempts: 2,
            delivery_backoff_ms: 200,
            delivery_timeout_ms: 5_000,
            max_poll_ms: 30_000,
        }
    }
}

pub type DynGateway = Arc<dyn LanguageModelGateway>;

#[derive(Default)]
pub(crate) struct Outbox {
    queue: Mutex<VecDeque<OutboundMessage>>,
    notify: Notify,
}

pub struct AppState {
    pub store: Arc<dyn Store>,
    pub engine: QaEngine<DynGateway>,
    pub registry: SnapshotRegistry,
    pub config: ServiceConfig,
    writers: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    /// Course id to the draft id being generated.
    generating: Mutex<HashMap<String, String>>,
    outboxes: Mutex<HashMap<String, Arc<Outbox>>>,
    deliveries: AtomicUsize,
    http: reqwest::Client,
}

impl AppState {
    /// Builds the state and loads every course's latest published model into
    /// the live registry.
    pub fn new(
        store: Arc<dyn Store>,
        gateway: DynGateway,
        bank: Arc<QuestionBank>,
        config: ServiceConfig,
    ) -> Result<Arc<Self>, StoreError> {
        let engine = QaEngine::new(gateway, bank, config.qa);
        Self::with_engine(store, engine, config)
    }

    /// Like [`Self::new`] with a caller-built engine (custom support templates,
    /// for instance). The engine's QA settings win over `config.qa`.
    pub fn with_engine(
        store: Arc<dyn Store>,
        engine: QaEngine<DynGateway>,
        mut config: ServiceConfig,
    ) -> Result<Arc<Self>, StoreError> {
        config.qa = *engine.config();
        let registry = SnapshotRegistry::default();
        for course in store.courses()? {
            if let Some((model, chunks)) = store.published(&course.course_id, course.current_published_version)? {
                registry.install(&course.course_id, Snapshot::new(model, chunks));
            }
        }
        let http = reqwest::Client::builder()
            .timeout(std::time::Duration::from_millis(config.delivery_timeout_ms))
            .build()
            .map_err(|e| StoreError::Corrupt(format!("http client: {e}")))?;
        Ok(Arc::new(Self {
            store,
            engine,
            registry,
            config,
            writers: Mutex::default(),
            generating: Mutex::default(),
            outboxes: Mutex::default(),
            deliveries: AtomicUsize::new(0),
            http,
        }))
    }

    /// The per-course lock serializing model mutations.
    pub(crate) fn writer(&self, course_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        Arc::clone(self.writers.lock().entry(course_id.to_string()).or_default())
    }

    pub(crate) fn outbox(&self, channel_id: &str) -> Arc<Outbox> {
        Arc::clone(self.outboxes.lock().entry(channel_id.to_string()).or_default())
    }

    /// Webhook deliveries still being attempted.
    pub fn deliveries_in_flight(&self) -> usize {
        self.deliveries.load(Ordering::SeqCst)
    }

    /// Whether a draft is being generated for the course.
    pub fn is_generating(&self, course_id: &str) -> bool {
        self.generating.lock().contains_key(course_id)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/languages", get(courses::languages))
        .route("/users", post(courses::create_user))
        .route("/me", get(courses::me))
        .route("/courses", post(courses::create_course).get(courses::list_courses))
        .route("/courses/:id", get(courses::get_course))
        .route("/courses/:id/syllabus", post(courses::upload_syllabus))
        .route("/courses/:id/draft", get(courses::draft_status))
        .route("/courses/:id/model/draft", get(courses::get_draft_jsonl))
        .route("/courses/:id/model", get(courses::get_model_jsonl).put(courses::put_model))
        .route("/courses/:id/publish", post(courses::publish_model))
        .route("/courses/:id/ask", post(courses::ask))
        .route("/courses/:id/logs/export", get(courses::export_logs))
        .route("/courses/:id/logs/dead-letters", get(courses::dead_letters))
        .route("/channels", post(channels::register))
        .route("/channels/:id/message", post(channels::inbound))
        .route("/channels/:id/poll", get(channels::poll))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(state)).await
}
