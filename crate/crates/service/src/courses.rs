use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Utc};
use serde::Deserialize;
use serde_json::json;
use vta_core::gateway::{LanguageTag, SourceLanguage};
use vta_core::ingest::SyllabusDocument;
use vta_core::knowledge::{
    apply_review, edits_from_records, generate_draft_model, parse_numbered_records, publish, serialize_model_jsonl,
    DraftConfig, LineDiagnostic, PublishError, ReviewError,
};
use vta_core::qa::{export_finetune_dataset, Answer, ChatTurn, Question, Snapshot};

use crate::api::*;
use crate::auth::{bearer, new_id, new_token, token_hash, Caller};
use crate::error::ApiError;
use crate::signing::sha256_hex;
use crate::store::{Course, DraftRecord, DraftStatus, User};
use crate::AppState;

type AppResult<T> = Result<T, ApiError>;

const JSONL: &str = "application/x-ndjson";

fn jsonl_response(body: String) -> Response {
    ([(CONTENT_TYPE, JSONL)], body).into_response()
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> AppResult<T> {
    body.map(|Json(b)| b).map_err(|e| ApiError::bad_request(e.body_text()))
}

pub(crate) fn course_or_404(state: &AppState, course_id: &str) -> AppResult<Course> {
    state.store.course(course_id)?.ok_or_else(|| ApiError::not_found(format!("course {course_id} not found")))
}

pub(crate) fn parse_lang(lang: Option<&str>) -> SourceLanguage {
    match lang.map(str::trim) {
        None | Some("") => SourceLanguage::Auto,
        Some(l) if l.eq_ignore_ascii_case("auto") => SourceLanguage::Auto,
        Some(l) => SourceLanguage::Tag(LanguageTag::new(l)),
    }
}

pub async fn languages(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({"languages": state.engine.gateway().supported_languages()}))
}

pub async fn create_user(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<CreateUserRequest>, JsonRejection>,
) -> AppResult<(StatusCode, Json<CreateUserResponse>)> {
    if let Some(admin) = &state.config.admin_token {
        if bearer(&headers).map(token_hash) != Some(token_hash(admin)) {
            return Err(ApiError::unauthorized("creating users requires the admin token"));
        }
    }
    let req = json_body(body)?;
    if req.display_name.trim().is_empty() {
        return Err(ApiError::bad_request("display_name is empty"));
    }
    let user = User { user_id: new_id("u"), role: req.role, display_name: req.display_name };
    let token = new_token();
    state.store.insert_user(&user, &token_hash(&token))?;
    tracing::info!(user_id = %user.user_id, role = user.role.as_str(), "user created");
    Ok((
        StatusCode::CREATED,
        Json(CreateUserResponse { user_id: user.user_id, role: user.role, display_name: user.display_name, token }),
    ))
}

pub async fn me(caller: Caller) -> Json<User> {
    Json(caller.0)
}

pub async fn create_course(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    body: Result<Json<CreateCourseRequest>, JsonRejection>,
) -> AppResult<(StatusCode, Json<Course>)> {
    caller.require_staff()?;
    let req = json_body(body)?;
    let id = req.course_id.trim();
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) {
        return Err(ApiError::bad_request("course_id must be non-empty ASCII letters, digits, '-', '_' or '.'"));
    }
    let course = Course {
        course_id: id.to_string(),
        title: req.title,
        owner: caller.0.user_id,
        current_published_version: None,
    };
    state.store.insert_course(&course)?;
    tracing::info!(course_id = %course.course_id, "course created");
    Ok((StatusCode::CREATED, Json(course)))
}

pub async fn list_courses(State(state): State<Arc<AppState>>, _caller: Caller) -> AppResult<Json<Vec<Course>>> {
    Ok(Json(state.store.courses()?))
}

pub async fn get_course(
    State(state): State<Arc<AppState>>,
    _caller: Caller,
    Path(id): Path<String>,
) -> AppResult<Json<Course>> {
    Ok(Json(course_or_404(&state, &id)?))
}

/// Stable per (course, content): re-uploading the same bytes names the same draft.
fn draft_id_for(course_id: &str, content_hash: &str) -> String {
    format!("d-{}", &sha256_hex(format!("{course_id}\n{content_hash}").as_bytes())[..16])
}

pub async fn upload_syllabus(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> AppResult<(StatusCode, Json<DraftSummary>)> {
    caller.require_staff()?;
    course_or_404(&state, &id)?;
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(format!("body is not UTF-8: {e}")))?;
    if text.trim().is_empty() {
        return Err(ApiError::bad_request("syllabus body is empty"));
    }
    let content_hash = sha256_hex(&body);
    let draft_id = draft_id_for(&id, &content_hash);

    let writer = state.writer(&id);
    let _guard = writer.lock().await;
    {
        let generating = state.generating.lock();
        match generating.get(&id) {
            Some(running) if *running == draft_id => {
                let existing = state.store.draft(&id)?.expect("generating drafts are stored");
                return Ok((StatusCode::ACCEPTED, Json(DraftSummary::of(&id, &existing))));
            }
            Some(_) => return Err(ApiError::conflict("generation_in_flight", "a draft is already being generated")),
            None => {}
        }
    }
    if let Some(existing) = state.store.draft(&id)? {
        if existing.draft_id == draft_id && existing.status != DraftStatus::Failed {
            return Ok((StatusCode::ACCEPTED, Json(DraftSummary::of(&id, &existing))));
        }
    }

    let doc = SyllabusDocument::new(&id, "upload", text).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let chunks = doc.chunks(state.config.max_chars).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let record = DraftRecord {
        draft_id: draft_id.clone(),
        content_hash,
        status: DraftStatus::Generating,
        model: None,
        chunks,
        failures: Vec::new(),
        error: None,
        updated_at: Utc::now(),
    };
    state.store.put_draft(&id, &record)?;
    state.generating.lock().insert(id.clone(), draft_id.clone());
    tracing::info!(course_id = %id, %draft_id, chunks = record.chunks.len(), "draft generation started");

    let task_state = Arc::clone(&state);
    let course_id = id.clone();
    let pending = record.clone();
    tokio::task::spawn_blocking(move || generate(task_state, course_id, pending));
    Ok((StatusCode::ACCEPTED, Json(DraftSummary::of(&id, &record))))
}

fn generate(state: Arc<AppState>, course_id: String, mut record: DraftRecord) {
    let config = DraftConfig { retrieval: state.config.qa.retrieval };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        generate_draft_model(&course_id, &record.chunks, state.engine.bank(), state.engine.gateway(), &config)
    }));
    match outcome {
        Ok(Ok(draft)) => {
            record.status = DraftStatus::Ready;
            record.model = Some(draft.model);
            record.failures = draft.failures;
        }
        Ok(Err(e)) => {
            record.status = DraftStatus::Failed;
            record.error = Some(e.to_string());
        }
        Err(_) => {
            record.status = DraftStatus::Failed;
            record.error = Some("draft generation panicked".into());
        }
    }
    record.updated_at = Utc::now();
    let writer = state.writer(&course_id);
    let _guard = writer.blocking_lock();
    if let Err(e) = state.store.put_draft(&course_id, &record) {
        tracing::error!(%course_id, error = %e, "storing draft failed");
    }
    state.generating.lock().remove(&course_id);
    tracing::info!(%course_id, draft_id = %record.draft_id, status = ?record.status, "draft generation finished");
}

fn ready_draft(state: &AppState, course_id: &str) -> AppResult<DraftRecord> {
    let draft = state
        .store
        .draft(course_id)?
        .ok_or_else(|| ApiError::not_found(format!("course {course_id} has no draft")))?;
    match draft.status {
        DraftStatus::Ready => Ok(draft),
        DraftStatus::Generating => Err(ApiError::conflict("draft_not_ready", "the draft is still being generated")),
        DraftStatus::Failed => Err(ApiError::conflict(
            "draft_failed",
            format!("draft generation failed: {}", draft.error.as_deref().unwrap_or("unknown error")),
        )),
    }
}

pub async fn draft_status(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(id): Path<String>,
) -> AppResult<Json<DraftSummary>> {
    caller.require_staff()?;
    course_or_404(&state, &id)?;
    let draft = state.store.draft(&id)?.ok_or_else(|| ApiError::not_found(format!("course {id} has no draft")))?;
    Ok(Json(DraftSummary::of(&id, &draft)))
}

pub async fn get_draft_jsonl(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(id): Path<String>,
) -> AppResult<Response> {
    caller.require_staff()?;
    course_or_404(&state, &id)?;
    let draft = ready_draft(&state, &id)?;
    Ok(jsonl_response(serialize_model_jsonl(draft.model.as_ref().expect("ready drafts have a model"))))
}

fn diagnostics_error(code: &'static str, message: &str, diagnostics: Vec<LineDiagnostic>) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message).with_details(json!({ "diagnostics": diagnostics }))
}

pub async fn put_model(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(id): Path<String>,
    body: Bytes,
) -> AppResult<Json<DraftSummary>> {
    caller.require_staff()?;
    course_or_404(&state, &id)?;
    let text = std::str::from_utf8(&body).map_err(|e| {
        diagnostics_error(
            "invalid_jsonl",
            "body is not UTF-8",
            vec![LineDiagnostic {
                line: 1 + body[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
                message: e.to_string(),
            }],
        )
    })?;
    let numbered = parse_numbered_records(text).map_err(|e| diagnostics_error("invalid_jsonl", "malformed JSONL", e.diagnostics))?;
    let line_of = |question: &str| numbered.iter().find(|(_, r)| r.question == question).map_or(0, |(l, _)| *l);
    let records: Vec<_> = numbered.iter().map(|(_, r)| r.clone()).collect();

    let writer = state.writer(&id);
    let _guard = writer.lock().await;
    let mut draft = ready_draft(&state, &id)?;
    let model = draft.model.as_ref().expect("ready drafts have a model");
    let edits = edits_from_records(model, &records).map_err(|questions| {
        let diags = questions
            .iter()
            .map(|q| LineDiagnostic {
                line: line_of(q),
                message: format!("answer edited but isTrue left as the placeholder: {q}"),
            })
            .collect();
        diagnostics_error("ungraded_edit", "edited answers need a TRUE, FALSE or PARTIAL grade", diags)
    })?;
    let reviewed = apply_review(model, &edits).map_err(|e| {
        let (questions, why) = match &e {
            ReviewError::Unmatched(q) => (q, "question is not in the draft"),
            ReviewError::MissingCorrection(q) => (q, "FALSE needs a corrected answer"),
        };
        let diags = questions.iter().map(|q| LineDiagnostic { line: line_of(q), message: format!("{why}: {q}") }).collect();
        diagnostics_error("invalid_review", &e.to_string(), diags)
    })?;
    draft.model = Some(reviewed);
    draft.updated_at = Utc::now();
    state.store.put_draft(&id, &draft)?;
    tracing::info!(course_id = %id, edits = edits.len(), "review applied");
    Ok(Json(DraftSummary::of(&id, &draft)))
}

pub async fn publish_model(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(id): Path<String>,
) -> AppResult<Json<PublishResponse>> {
    caller.require_staff()?;
    let writer = state.writer(&id);
    let _guard = writer.lock().await;
    let course = course_or_404(&state, &id)?;
    let draft = ready_draft(&state, &id)?;
    let model = draft.model.as_ref().expect("ready drafts have a model");
    let published = publish(model, course.current_published_version).map_err(|e| match e {
        PublishError::DraftEntries(questions) => {
            ApiError::conflict("placeholders_remaining", "every entry must be reviewed before publishing")
                .with_details(json!({ "placeholders": questions }))
        }
    })?;
    state.store.insert_published(&published, &draft.chunks)?;
    let version = published.version;
    let entries = published.entries.len();
    state.registry.install(&id, Snapshot::new(published, draft.chunks));
    state.engine.cache().evict_course(&id, version);
    tracing::info!(course_id = %id, version, "model published");
    Ok(Json(PublishResponse { course_id: id, version, entries }))
}

#[derive(Debug, Deserialize)]
pub struct VersionQuery {
    version: Option<u64>,
}

pub async fn get_model_jsonl(
    State(state): State<Arc<AppState>>,
    _caller: Caller,
    Path(id): Path<String>,
    Query(q): Query<VersionQuery>,
) -> AppResult<Response> {
    course_or_404(&state, &id)?;
    let (model, _) = state.store.published(&id, q.version)?.ok_or_else(|| match q.version {
        Some(v) => ApiError::not_found(format!("course {id} has no published version {v}")),
        None => ApiError::not_found(format!("course {id} has no published model")),
    })?;
    let mut response = jsonl_response(serialize_model_jsonl(&model));
    response.headers_mut().insert("x-model-version", model.version.into());
    Ok(response)
}

/// Answers against the live snapshot and appends the chat turn.
pub(crate) async fn answer_and_log(
    state: &Arc<AppState>,
    question: Question,
    snapshot: Arc<Snapshot>,
) -> AppResult<(u64, Answer)> {
    let state = Arc::clone(state);
    tokio::task::spawn_blocking(move || {
        let answer = state.engine.cached_answer(&question, &snapshot);
        let turn = ChatTurn {
            turn_id: 0,
            course_id: question.course_id.clone(),
            channel_id: question.channel.clone(),
            question: question.text.clone(),
            answer: answer.clone(),
            asked_at: question.asked_at,
            answered_at: Utc::now(),
        };
        let turn_id = state.store.append_turn(&turn)?;
        Ok((turn_id, answer))
    })
    .await
    .map_err(|e| ApiError::internal(format!("answer task failed: {e}")))?
}

pub(crate) fn live_snapshot(state: &AppState, course_id: &str) -> AppResult<Arc<Snapshot>> {
    state
        .registry
        .get(course_id)
        .ok_or_else(|| ApiError::conflict("not_published", format!("course {course_id} has no published model")))
}

pub async fn ask(
    State(state): State<Arc<AppState>>,
    _caller: Caller,
    Path(id): Path<String>,
    body: Result<Json<AskRequest>, JsonRejection>,
) -> AppResult<(StatusCode, Json<AskResponse>)> {
    course_or_404(&state, &id)?;
    let req = json_body(body)?;
    let snapshot = live_snapshot(&state, &id)?;
    let question = Question::new(&id, req.question)
        .map_err(|e| ApiError::bad_request(e.to_string()))?
        .with_lang(parse_lang(req.lang.as_deref()));
    let (turn_id, answer) = answer_and_log(&state, question, snapshot).await?;
    let status = if answer.degraded { StatusCode::SERVICE_UNAVAILABLE } else { StatusCode::OK };
    Ok((status, Json(AskResponse::new(turn_id, answer))))
}

#[derive(Debug, Deserialize)]
pub struct SinceQuery {
    since: Option<String>,
}

pub async fn export_logs(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(id): Path<String>,
    Query(q): Query<SinceQuery>,
) -> AppResult<Response> {
    caller.require_staff()?;
    course_or_404(&state, &id)?;
    let since = q
        .since
        .as_deref()
        .map(|s| {
            DateTime::parse_from_rfc3339(s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| ApiError::bad_request(format!("since must be RFC 3339: {e}")))
        })
        .transpose()?;
    let turns = state.store.turns(&id)?;
    Ok(jsonl_response(export_finetune_dataset(&turns, since)))
}

pub async fn dead_letters(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(id): Path<String>,
) -> AppResult<Json<Vec<crate::store::DeadLetter>>> {
    caller.require_staff()?;
    course_or_404(&state, &id)?;
    Ok(Json(state.store.dead_letters(&id)?))
}
