//! Channel registration, inbound messages and outbound delivery.
//!
//! WEBHOOK channels get each answer POSTed to their callback URL, signed with
//! the shared secret and carrying an `Idempotency-Key` of
//! `<channel_id>:<turn_id>`; a delivery is attempted
//! `delivery_attempts` times and then dead-lettered. WEBCHAT channels get the
//! answer in the response. REFERENCE_ADAPTER channels queue it for
//! `GET /channels/{id}/poll`.

use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::Utc;
use serde::Deserialize;
use vta_core::qa::Question;

use crate::api::{AskResponse, ChannelMessage, OutboundMessage, PollResponse, RegisterChannelRequest};
use crate::auth::{new_id, Caller};
use crate::courses::{answer_and_log, course_or_404, live_snapshot, parse_lang};
use crate::error::ApiError;
use crate::signing::{sign, verify, IDEMPOTENCY_HEADER, SIGNATURE_HEADER};
use crate::store::{ChannelKind, ChannelRegistration, DeadLetter};
use crate::AppState;

pub async fn register(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    body: Result<Json<RegisterChannelRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<ChannelRegistration>), ApiError> {
    caller.require_staff()?;
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    course_or_404(&state, &req.course_id)?;
    let secret = req.shared_secret.filter(|s| !s.is_empty());
    if req.kind == ChannelKind::Webhook {
        let url = req.callback_url.as_deref().unwrap_or_default();
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(ApiError::bad_request("WEBHOOK channels need an http(s) callback_url"));
        }
        if secret.is_none() {
            return Err(ApiError::bad_request("WEBHOOK channels need a shared_secret to sign deliveries"));
        }
    }
    let channel = ChannelRegistration {
        channel_id: new_id("ch"),
        course_id: req.course_id,
        kind: req.kind,
        callback_url: req.callback_url.filter(|_| req.kind == ChannelKind::Webhook),
        shared_secret: secret,
    };
    state.store.insert_channel(&channel)?;
    tracing::info!(channel_id = %channel.channel_id, course_id = %channel.course_id, kind = ?channel.kind, "channel registered");
    Ok((StatusCode::CREATED, Json(channel)))
}

fn channel_or_410(state: &AppState, channel_id: &str) -> Result<ChannelRegistration, ApiError> {
    state
        .store
        .channel(channel_id)?
        .ok_or_else(|| ApiError::new(StatusCode::GONE, "unregistered_channel", format!("channel {channel_id} is not registered")))
}

fn check_signature(channel: &ChannelRegistration, headers: &HeaderMap, signed: &[u8]) -> Result<(), ApiError> {
    let Some(secret) = &channel.shared_secret else {
        return Ok(());
    };
    let header = headers.get(SIGNATURE_HEADER).and_then(|v| v.to_str().ok()).unwrap_or_default();
    if verify(secret, signed, header) {
        Ok(())
    } else {
        Err(ApiError::unauthorized("bad or missing signature"))
    }
}

pub async fn inbound(
    State(state): State<Arc<AppState>>,
    Path(channel_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let channel = channel_or_410(&state, &channel_id)?;
    check_signature(&channel, &headers, &body)?;
    let msg: ChannelMessage =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("expected {{user, text}}: {e}")))?;
    let snapshot = live_snapshot(&state, &channel.course_id)?;
    let question = Question::new(&channel.course_id, msg.text.clone())
        .map_err(|e| ApiError::bad_request(e.to_string()))?
        .with_lang(parse_lang(msg.lang.as_deref()))
        .with_channel(&channel.channel_id);
    let (turn_id, answer) = answer_and_log(&state, question, snapshot).await?;
    let reply = AskResponse::new(turn_id, answer);

    match channel.kind {
        ChannelKind::Webchat => Ok(Json(reply).into_response()),
        ChannelKind::ReferenceAdapter => {
            let outbox = state.outbox(&channel.channel_id);
            outbox.queue.lock().push_back(OutboundMessage {
                channel_id: channel.channel_id.clone(),
                course_id: channel.course_id.clone(),
                user: msg.user,
                question: msg.text,
                reply,
            });
            outbox.notify.notify_one();
            Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "turn_id": turn_id, "status": "queued" }))).into_response())
        }
        ChannelKind::Webhook => {
            let out = OutboundMessage {
                channel_id: channel.channel_id.clone(),
                course_id: channel.course_id.clone(),
                user: msg.user,
                question: msg.text,
                reply,
            };
            state.deliveries.fetch_add(1, Ordering::SeqCst);
            let task_state = Arc::clone(&state);
            tokio::spawn(async move {
                deliver(&task_state, &channel, out).await;
                task_state.deliveries.fetch_sub(1, Ordering::SeqCst);
            });
            Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "turn_id": turn_id, "status": "queued" }))).into_response())
        }
    }
}

async fn deliver(state: &AppState, channel: &ChannelRegistration, message: OutboundMessage) {
    let url = channel.callback_url.clone().unwrap_or_default();
    let body = serde_json::to_vec(&message).expect("outbound message serializes");
    let signature = sign(channel.shared_secret.as_deref().unwrap_or_default(), &body);
    let key = format!("{}:{}", channel.channel_id, message.reply.turn_id);
    let attempts = state.config.delivery_attempts.max(1);
    let mut last_error = String::new();
    for attempt in 1..=attempts {
        let sent = state
            .http
            .post(&url)
            .header("content-type", "application/json")
            .header(SIGNATURE_HEADER, &signature)
            .header(IDEMPOTENCY_HEADER, &key)
            .body(body.clone())
            .send()
            .await;
        match sent {
            Ok(r) if r.status().is_success() => {
                tracing::info!(channel_id = %channel.channel_id, turn_id = message.reply.turn_id, attempt, "delivered");
                return;
            }
            Ok(r) => last_error = format!("callback returned HTTP {}", r.status().as_u16()),
            Err(e) => last_error = format!("callback unreachable: {e}"),
        }
        tracing::warn!(channel_id = %channel.channel_id, attempt, error = %last_error, "delivery failed");
        if attempt < attempts {
            tokio::time::sleep(Duration::from_millis(state.config.delivery_backoff_ms * u64::from(attempt))).await;
        }
    }
    let letter = DeadLetter {
        channel_id: channel.channel_id.clone(),
        course_id: channel.course_id.clone(),
        turn_id: message.reply.turn_id,
        callback_url: url,
        attempts,
        last_error,
        payload: serde_json::to_value(&message).expect("outbound message serializes"),
        created_at: Utc::now(),
    };
    if let Err(e) = state.store.append_dead_letter(&letter) {
        tracing::error!(channel_id = %channel.channel_id, error = %e, "dead-lettering failed");
    }
}

#[derive(Debug, Deserialize)]
pub struct PollQuery {
    timeout_ms: Option<u64>,
}

/// Long poll: returns queued messages at once, or waits up to `timeout_ms` for
/// the next one. When the channel has a secret, the request must carry the
/// signature of the channel id.
pub async fn poll(
    State(state): State<Arc<AppState>>,
    Path(channel_id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<PollQuery>,
) -> Result<Json<PollResponse>, ApiError> {
    let channel = channel_or_410(&state, &channel_id)?;
    if channel.kind != ChannelKind::ReferenceAdapter {
        return Err(ApiError::bad_request("only REFERENCE_ADAPTER channels are polled"));
    }
    check_signature(&channel, &headers, channel.channel_id.as_bytes())?;
    let outbox = state.outbox(&channel_id);
    let wait = Duration::from_millis(q.timeout_ms.unwrap_or(0).min(state.config.max_poll_ms));
    let deadline = tokio::time::Instant::now() + wait;
    loop {
        let messages: Vec<OutboundMessage> = outbox.queue.lock().drain(..).collect();
        if !messages.is_empty() || tokio::time::Instant::now() >= deadline {
            return Ok(Json(PollResponse { messages }));
        }
        let _ = tokio::time::timeout_at(deadline, outbox.notify.notified()).await;
    }
}
