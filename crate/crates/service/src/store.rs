//! Persistence behind the [`Store`] trait, with a SQLite implementation.
//!
//! Published models are stored relationally (one row per entry); drafts, which
//! change on every review, are kept as a JSON document per course.

use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vta_core::ingest::DocumentChunk;
use vta_core::knowledge::{Category, DraftFailure, KnowledgeEntry, KnowledgeModel, ModelStatus, SchemaElement, Verification};
use vta_core::qa::{Answer, ChatTurn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Instructor,
    Ta,
    Student,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Instructor => "INSTRUCTOR",
            Role::Ta => "TA",
            Role::Student => "STUDENT",
        }
    }

    /// Instructors and teaching assistants review and publish.
    pub fn is_staff(self) -> bool {
        matches!(self, Role::Instructor | Role::Ta)
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "INSTRUCTOR" => Ok(Role::Instructor),
            "TA" => Ok(Role::Ta),
            "STUDENT" => Ok(Role::Student),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub user_id: String,
    pub role: Role,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Course {
    pub course_id: String,
    pub title: String,
    pub owner: String,
    pub current_published_version: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChannelKind {
    Webhook,
    Webchat,
    ReferenceAdapter,
}

impl ChannelKind {
    fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Webhook => "WEBHOOK",
            ChannelKind::Webchat => "WEBCHAT",
            ChannelKind::ReferenceAdapter => "REFERENCE_ADAPTER",
        }
    }
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "WEBHOOK" => Ok(ChannelKind::Webhook),
            "WEBCHAT" => Ok(ChannelKind::Webchat),
            "REFERENCE_ADAPTER" => Ok(ChannelKind::ReferenceAdapter),
            other => Err(format!("unknown channel kind `{other}`")),
        }
    }
}

/// A registered delivery surface. The shared secret is never serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChannelRegistration {
    pub channel_id: String,
    pub course_id: String,
    pub kind: ChannelKind,
    pub callback_url: Option<String>,
    #[serde(skip)]
    pub shared_secret: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DraftStatus {
    Generating,
    Ready,
    Failed,
}

/// The course's working draft and the syllabus it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftRecord {
    pub draft_id: String,
    pub content_hash: String,
    pub status: DraftStatus,
    pub model: Option<KnowledgeModel>,
    pub chunks: Vec<DocumentChunk>,
    pub failures: Vec<DraftFailure>,
    pub error: Option<String>,
    pub updated_at: DateTime<Utc>,
}

/// An outbound delivery that failed every attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub channel_id: String,
    pub course_id: String,
    pub turn_id: u64,
    pub callback_url: String,
    pub attempts: u32,
    pub last_error: String,
    pub payload: serde_json::Value,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} already exists")]
    Conflict(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("database error: {0}")]
    Database(#[from] rusqlite::Error),
    #[error("corrupt stored value: {0}")]
    Corrupt(String),
}

pub trait Store: Send + Sync {
    fn insert_user(&self, user: &User, token_hash: &str) -> Result<(), StoreError>;
    fn user_by_token_hash(&self, token_hash: &str) -> Result<Option<User>, StoreError>;

    fn insert_course(&self, course: &Course) -> Result<(), StoreError>;
    fn course(&self, course_id: &str) -> Result<Option<Course>, StoreError>;
    fn courses(&self) -> Result<Vec<Course>, StoreError>;

    fn put_draft(&self, course_id: &str, draft: &DraftRecord) -> Result<(), StoreError>;
    fn draft(&self, course_id: &str) -> Result<Option<DraftRecord>, StoreError>;

    /// Stores a published model and makes it the course's current version in
    /// one transaction.
    fn insert_published(&self, model: &KnowledgeModel, chunks: &[DocumentChunk]) -> Result<(), StoreError>;
    /// The given version, or the latest when `version` is `None`.
    fn published(
        &self,
        course_id: &str,
        version: Option<u64>,
    ) -> Result<Option<(KnowledgeModel, Vec<DocumentChunk>)>, StoreError>;

    /// Appends a turn and returns its assigned id; `turn.turn_id` is ignored.
    fn append_turn(&self, turn: &ChatTurn) -> Result<u64, StoreError>;
    fn turns(&self, course_id: &str) -> Result<Vec<ChatTurn>, StoreError>;
    fn turn_count(&self) -> Result<u64, StoreError>;

    fn insert_channel(&self, channel: &ChannelRegistration) -> Result<(), StoreError>;
    fn channel(&self, channel_id: &str) -> Result<Option<ChannelRegistration>, StoreError>;

    fn append_dead_letter(&self, letter: &DeadLetter) -> Result<(), StoreError>;
    fn dead_letters(&self, course_id: &str) -> Result<Vec<DeadLetter>, StoreError>;
}

const SCHEMA_SQL: &str = "
CREATE TABLE IF NOT EXISTS users (
    user_id TEXT PRIMARY KEY,
    role TEXT NOT NULL,
    display_name TEXT NOT NULL,
    token_hash TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS courses (
    course_id TEXT PRIMARY KEY,
    title TEXT NOT NULL,
    owner TEXT NOT NULL REFERENCES users(user_id),
    current_version INTEGER
);
CREATE TABLE IF NOT EXISTS drafts (
    course_id TEXT PRIMARY KEY REFERENCES courses(course_id),
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS models (
    course_id TEXT NOT NULL REFERENCES courses(course_id),
    version INTEGER NOT NULL,
    chunks TEXT NOT NULL,
    published_at TEXT NOT NULL,
    PRIMARY KEY (course_id, version)
);
CREATE TABLE IF NOT EXISTS entries (
    course_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    position INTEGER NOT NULL,
    question TEXT NOT NULL,
    answer TEXT NOT NULL,
    is_true TEXT NOT NULL,
    corrected_answer TEXT,
    category TEXT NOT NULL,
    element TEXT NOT NULL,
    PRIMARY KEY (course_id, version, position),
    FOREIGN KEY (course_id, version) REFERENCES models(course_id, version)
);
CREATE TABLE IF NOT EXISTS turns (
    turn_id INTEGER PRIMARY KEY AUTOINCREMENT,
    course_id TEXT NOT NULL,
    channel_id TEXT NOT NULL,
    question TEXT NOT NULL,
    answer TEXT NOT NULL,
    asked_at TEXT NOT NULL,
    answered_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS turns_by_course ON turns(course_id, asked_at);
CREATE TABLE IF NOT EXISTS channels (
    channel_id TEXT PRIMARY KEY,
    course_id TEXT NOT NULL REFERENCES courses(course_id),
    kind TEXT NOT NULL,
    callback_url TEXT,
    shared_secret TEXT
);
CREATE TABLE IF NOT EXISTS dead_letters (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    course_id TEXT NOT NULL,
    body TEXT NOT NULL
);
";

pub struct SqliteStore {
    conn: Mutex<Connection>,
}

impl SqliteStore {
    /// Opens (creating if needed) a database file, or an in-memory database
    /// for `:memory:`.
    pub fn open(locator: &str) -> Result<Self, StoreError> {
        let conn = if locator == ":memory:" { Connection::open_in_memory()? } else { Connection::open(Path::new(locator))? };
        conn.execute_batch("PRAGMA foreign_keys = ON;")?;
        conn.execute_batch(SCHEMA_SQL)?;
        Ok(Self { conn: Mutex::new(conn) })
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        Self::open(":memory:")
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("stored values serialize")
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, StoreError> {
    serde_json::from_str(text).map_err(|e| StoreError::Corrupt(e.to_string()))
}

fn parse_time(text: &str) -> Result<DateTime<Utc>, StoreError> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| StoreError::Corrupt(e.to_string()))
}

fn is_unique_violation(e: &rusqlite::Error) -> bool {
    matches!(e, rusqlite::Error::SqliteFailure(f, _) if f.code == rusqlite::ErrorCode::ConstraintViolation)
}

fn course_from_row(row: &rusqlite::Row<'_>) -> rusqlite::Result<Course> {
    Ok(Course {
        course_id: row.get(0)?,
        title: row.get(1)?,
        owner: row.get(2)?,
        current_published_version: row.get::<_, Option<i64>>(3)?.map(|v| v as u64),
    })
}

impl Store for SqliteStore {
    fn insert_user(&self, user: &User, token_hash: &str) -> Result<(), StoreError> {
        self.conn
            .lock()
            .execute(
                "INSERT INTO users (user_id, role, display_name, token_hash) VALUES (?1, ?2, ?3, ?4)",
                params![user.user_id, user.role.as_str(), user.display_name, token_hash],
            )
            .map_err(|e| if is_unique_violation(&e) { StoreError::Conflict(format!("user {}", user.user_id)) } else { e.into() })?;
        Ok(())
    }

    fn user_by_token_hash(&self, token_hash: &str) -> Result<Option<User>, StoreError> {
        let conn = self.conn.lock();
        let row = conn
            .query_row(
                "SELECT user_id, role, display_name FROM users WHERE token_hash = ?1",
                params![token_hash],
                |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?)),
            )
            .optional()?;
        row.map(|(user_id, role, display_name)| {
            Ok(User { user_id, role: role.parse().map_err(StoreError::Corrupt)?, display_name })
        })
        .transpose()
    }

    fn insert_course(&self, course: &Course) -> Result<(), StoreError> {
        self.conn
            .lock()
            .execute(
                "INSERT INTO courses (course_id, title, owner, current_version) VALUES (?1, ?2, ?3, NULL)",
                params![course.course_id, course.title, course.owner],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Conflict(format!("course {}", course.course_id))
                } else {
                    e.into()
                }
            })?;
        Ok(())
    }

    fn course(&self, course_id: &str) -> Result<Option<Course>, StoreError> {
        Ok(self
            .conn
            .lock()
            .query_row(
                "SELECT course_id, title, owner, current_version FROM courses WHERE course_id = ?1",
                params![course_id],
                course_from_row,
            )
            .optional()?)
    }

    fn courses(&self) -> Result<Vec<Course>, StoreError> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare("SELECT course_id, title, owner, current_version FROM courses ORDER BY course_id")?;
        let rows = stmt.query_map([], course_from_row)?.collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    fn put_draft(&self, course_id: &str, draft: &DraftRecord) -> Result<(), StoreError> {
        self.conn.lock().execute(
            "INSERT INTO drafts (course_id, body) VALUES (?1, ?2)
             ON CONFLICT(course_id) DO UPDATE SET body = excluded.body",
            params![course_id, to_json(draft)],
        )?;
        Ok(())
    }

    fn draft(&self, course_id: &str) -> Result<Option<DraftRecord>, StoreError> {
        let body: Option<String> = self
            .conn
            .lock()
            .query_row("SELECT body FROM drafts WHERE course_id = ?1", params![course_id], |r| r.get(0))
            .optional()?;
        body.as_deref().map(from_json).transpose()
    }

    fn insert_published(&self, model: &KnowledgeModel, chunks: &[DocumentChunk]) -> Result<(), StoreError> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction()?;
        let version = model.version as i64;
        tx.execute(
            "INSERT INTO models (course_id, version, chunks, published_at) VALUES (?1, ?2, ?3, ?4)",
            params![model.course_id, version, to_json(&chunks), Utc::now().to_rfc3339()],
        )
        .map_err(|e| {
            if is_unique_violation(&e) {
                StoreError::Conflict(format!("model {} version {}", model.course_id, model.version))
            } else {
                e.into()
            }
        })?;
        for (position, e) in model.entries.iter().enumerate() {
            tx.execute(
                "INSERT INTO entries (course_id, version, position, question, answer, is_true, corrected_answer, category, element)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
                params![
                    model.course_id,
                    version,
                    position as i64,
                    e.question,
                    e.answer,
                    e.verification.as_field(),
                    e.corrected_answer,
                    e.element.category.as_str(),
                    e.element.key,
                ],
            )?;
        }
        let updated = tx.execute(
            "UPDATE courses SET current_version = ?2 WHERE course_id = ?1",
            params![model.course_id, version],
        )?;
        if updated == 0 {
            return Err(StoreError::NotFound(format!("course {}", model.course_id)));
        }
        tx.commit()?;
        Ok(())
    }

    fn published(
        &self,
        course_id: &str,
        version: Option<u64>,
    ) -> Result<Option<(KnowledgeModel, Vec<DocumentChunk>)>, StoreError> {
        let conn = self.conn.lock();
        let head: Option<(i64, String)> = match version {
            Some(v) => conn
                .query_row(
                    "SELECT version, chunks FROM models WHERE course_id = ?1 AND version = ?2",
                    params![course_id, v as i64],
                    |r| Ok((r.get(0)?, r.get(1)?)),
                )
                .optional()?,
            None => conn
                .query_row(
                    "SELECT version, chunks FROM models WHERE course_id = ?1 ORDER BY version DESC LIMIT 1",
                    params![course_id],
                    |r| Ok((r.get(0)?, r.get(1)?)),
                )
                .optional()?,
        };
        let Some((version, chunks)) = head else {
            return Ok(None);
        };
        let mut stmt = conn.prepare(
            "SELECT question, answer, is_true, corrected_answer, category, element FROM entries
             WHERE course_id = ?1 AND version = ?2 ORDER BY position",
        )?;
        let rows = stmt
            .query_map(params![course_id, version], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, Option<String>>(3)?,
                    r.get::<_, String>(4)?,
                    r.get::<_, String>(5)?,
                ))
            })?
            .collect::<Result<Vec<_>, _>>()?;
        let mut entries = Vec::with_capacity(rows.len());
        for (question, answer, is_true, corrected_answer, category, key) in rows {
            let verification = Verification::from_field(&is_true)
                .ok_or_else(|| StoreError::Corrupt(format!("isTrue `{is_true}`")))?;
            let category = Category::from_str(&category).map_err(|_| StoreError::Corrupt(format!("category `{category}`")))?;
            let element = SchemaElement::new(category, &key)
                .ok_or_else(|| StoreError::Corrupt(format!("element `{category:?}/{key}`")))?;
            entries.push(KnowledgeEntry { question, answer, verification, corrected_answer, element });
        }
        let model = KnowledgeModel {
            course_id: course_id.to_string(),
            entries,
            version: version as u64,
            status: ModelStatus::Published,
        };
        Ok(Some((model, from_json(&chunks)?)))
    }

    fn append_turn(&self, turn: &ChatTurn) -> Result<u64, StoreError> {
        let conn = self.conn.lock();
        conn.execute(
            "INSERT INTO turns (course_id, channel_id, question, answer, asked_at, answered_at) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                turn.course_id,
                turn.channel_id,
                turn.question,
                to_json(&turn.answer),
                turn.asked_at.to_rfc3339(),
                turn.answered_at.to_rfc3339()
            ],
        )?;
        Ok(conn.last_insert_rowid() as u64)
    }

    fn turns(&self, course_id: &str) -> Result<Vec<ChatTurn>, StoreError> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare(
            "SELECT turn_id, channel_id, question, answer, asked_at, answered_at FROM turns
             WHERE course_id = ?1 ORDER BY turn_id",
        )?;
        let rows = stmt
            .query_map(params![course_id], |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, String>(4)?,
                    r.get::<_, String>(5)?,
                ))
            })?
            .collect::<Result<Vec<_>, _>>()?;
        rows.into_iter()
            .map(|(turn_id, channel_id, question, answer, asked_at, answered_at)| {
                Ok(ChatTurn {
                    turn_id: turn_id as u64,
                    course_id: course_id.to_string(),
                    channel_id,
                    question,
                    answer: from_json::<Answer>(&answer)?,
                    asked_at: parse_time(&asked_at)?,
                    answered_at: parse_time(&answered_at)?,
                })
            })
            .collect()
    }

    fn turn_count(&self) -> Result<u64, StoreError> {
        let n: i64 = self.conn.lock().query_row("SELECT COUNT(*) FROM turns", [], |r| r.get(0))?;
        Ok(n as u64)
    }

    fn insert_channel(&self, channel: &ChannelRegistration) -> Result<(), StoreError> {
        self.conn
            .lock()
            .execute(
                "INSERT INTO channels (channel_id, course_id, kind, callback_url, shared_secret) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    channel.channel_id,
                    channel.course_id,
                    channel.kind.as_str(),
                    channel.callback_url,
                    channel.shared_secret
                ],
            )
            .map_err(|e| {
                if is_unique_violation(&e) {
                    StoreError::Conflict(format!("channel {}", channel.channel_id))
                } else {
                    e.into()
                }
            })?;
        Ok(())
    }

    fn channel(&self, channel_id: &str) -> Result<Option<ChannelRegistration>, StoreError> {
        let conn = self.conn.lock();
        let row = conn
            .query_row(
                "SELECT channel_id, course_id, kind, callback_url, shared_secret FROM channels WHERE channel_id = ?1",
                params![channel_id],
                |r| {
                    Ok((
                        r.get::<_, String>(0)?,
                        r.get::<_, String>(1)?,
                        r.get::<_, String>(2)?,
                        r.get::<_, Option<String>>(3)?,
                        r.get::<_, Option<String>>(4)?,
                    ))
                },
            )
            .optional()?;
        row.map(|(channel_id, course_id, kind, callback_url, shared_secret)| {
            Ok(ChannelRegistration {
                channel_id,
                course_id,
                kind: kind.parse().map_err(StoreError::Corrupt)?,
                callback_url,
                shared_secret,
            })
        })
        .transpose()
    }

    fn append_dead_letter(&self, letter: &DeadLetter) -> Result<(), StoreError> {
        self.conn.lock().execute(
            "INSERT INTO dead_letters (course_id, body) VALUES (?1, ?2)",
            params![letter.course_id, to_json(letter)],
        )?;
        Ok(())
    }

    fn dead_letters(&self, course_id: &str) -> Result<Vec<DeadLetter>, StoreError> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare("SELECT body FROM dead_letters WHERE course_id = ?1 ORDER BY id")?;
        let bodies = stmt.query_map(params![course_id], |r| r.get::<_, String>(0))?.collect::<Result<Vec<_>, _>>()?;
        bodies.iter().map(|b| from_json(b)).collect()
    }
}
