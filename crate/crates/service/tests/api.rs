mod common;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use common::*;
use reqwest::{Method, StatusCode};
use serde_json::{json, Value};
use vta_core::gateway::reference::ReferenceBackend;
use vta_core::gateway::{
    Extraction, GatewayError, InstrumentedGateway, LanguageModelGateway, LanguageTag, Provenance, RankedDocument,
    Sentiment, SourceLanguage, Translation,
};
use vta_core::knowledge::{parse_records, serialize_records, QuestionBank, Verification, PLACEHOLDER};
use vta_core::qa::parse_finetune_dataset;
use vta_core::NOT_FOUND;
use vta_service::api::{AskResponse, DraftSummary};
use vta_service::store::{DraftStatus, SqliteStore};
use vta_service::ServiceConfig;

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn upload_review_publish_ask_on_a_fresh_store() {
    let h = start(reference(), fast_config()).await;
    h.create_course("BUS100").await;

    let (status, _) = h.ask("BUS100", "What is the course number?", None).await;
    assert_eq!(status, StatusCode::CONFLICT, "no published model yet");

    let (status, body) = h.upload("BUS100", &fixture("bus100.txt")).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let summary = h.wait_ready("BUS100").await;
    assert_eq!(summary.status, DraftStatus::Ready);
    assert_eq!(summary.entries, 36);
    assert_eq!(summary.pending, 36);
    assert_eq!(summary.not_found, 0);

    let draft = h.draft_jsonl("BUS100").await;
    let records = parse_records(&draft).unwrap();
    assert_eq!(records.len(), 36);
    assert!(records.iter().all(|r| r.is_true == Verification::Draft));
    assert!(draft.lines().all(|l| l.ends_with(&format!("\"isTrue\":\"{PLACEHOLDER}\"}}"))));

    // GET then PUT unmodified changes nothing
    let (status, body) = h.put_model("BUS100", draft.clone()).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(h.draft_jsonl("BUS100").await, draft);

    let version = h.review_and_publish("BUS100", "Introduction to Business").await;
    assert_eq!(version, 2);

    let a = h.ask_ok("BUS100", "What is the course number?").await;
    assert_eq!(a.answer, "The course number is BUS 100.");
    assert!(a.found);
    assert!(!a.partial_flag);
    assert_eq!(a.model_version, 2);
    assert_eq!(a.sentiment, Sentiment::Neutral);

    let a = h.ask_ok("BUS100", COURSE_NAME_Q).await;
    assert_eq!(a.answer, "Introduction to Business");

    let a = h.ask_ok("BUS100", "What is the airspeed velocity of an unladen swallow?").await;
    assert!(!a.found);
    assert_eq!(a.answer, NOT_FOUND);

    let (status, _) = h.ask("NOPE", "What is the course number?", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = h.ask("BUS100", "   ", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = h.get("/courses/BUS100/model", Some(&h.student)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse_records(&body).unwrap().len(), 36);
    let (status, _) = h.get("/courses/BUS100/model?version=7", Some(&h.student)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let course: Value = serde_json::from_str(&h.get("/courses/BUS100", Some(&h.student)).await.1).unwrap();
    assert_eq!(course["current_published_version"], 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reviewed_after_edits_lines_update_the_draft() {
    let h = start(reference(), fast_config()).await;
    h.create_course("BUS100").await;
    h.upload("BUS100", &fixture("bus100.txt")).await;
    h.wait_ready("BUS100").await;

    let (status, body) = h.put_model("BUS100", fixture("after_edits.jsonl")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let summary: DraftSummary = serde_json::from_str(&body).unwrap();
    assert_eq!(summary.pending, 33);

    let draft = h.draft_jsonl("BUS100").await;
    for line in fixture("after_edits.jsonl").lines() {
        assert!(draft.lines().any(|l| l == line), "missing {line}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn malformed_or_ungraded_reviews_are_rejected_with_line_diagnostics() {
    let h = start(reference(), fast_config()).await;
    h.create_course("BUS100").await;
    h.upload("BUS100", &fixture("bus100.txt")).await;
    h.wait_ready("BUS100").await;
    let draft = h.draft_jsonl("BUS100").await;

    let mut lines: Vec<String> = draft.lines().map(str::to_string).collect();
    lines[2] = "{not json".into();
    let (status, body) = h.put_model("BUS100", lines.join("\n")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["diagnostics"][0]["line"], 3);

    let mut records = parse_records(&draft).unwrap();
    records[4].answer = "edited but not graded".into();
    let (status, body) = h.put_model("BUS100", serialize_records(&records)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let body: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["error"], "ungraded_edit");
    assert_eq!(body["diagnostics"][0]["line"], 5);

    let mut records = parse_records(&draft).unwrap();
    records[0].question = "What is the course's shoe size?".into();
    records[0].is_true = Verification::True;
    let (status, body) = h.put_model("BUS100", serialize_records(&records)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");

    // nothing was applied
    assert_eq!(h.draft_jsonl("BUS100").await, draft);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn publish_with_a_placeholder_left_is_refused() {
    let h = start(reference(), fast_config()).await;
    h.create_course("BUS100").await;
    h.upload("BUS100", &fixture("bus100.txt")).await;
    h.wait_ready("BUS100").await;
    let mut records = parse_records(&h.draft_jsonl("BUS100").await).unwrap();
    for r in records.iter_mut().skip(1) {
        r.is_true = Verification::True;
    }
    let left = records[0].question.clone();
    assert_eq!(h.put_model("BUS100", serialize_records(&records)).await.0, StatusCode::OK);
    let (status, body) = h.publish("BUS100").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["placeholders"], json!([left]));
    let (status, _) = h.ask("BUS100", "What is the course number?", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn roles_and_tokens_are_enforced() {
    let h = start(reference(), fast_config()).await;
    let (status, _) = h.post_json("/courses", Some(&h.student), json!({"course_id": "X", "title": "x"})).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = h.post_json("/courses", None, json!({"course_id": "X", "title": "x"})).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = h.post_json("/courses", Some("vta_bogus"), json!({"course_id": "X", "title": "x"})).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    h.create_course("BUS100").await;
    let (status, _) = h.post_json("/courses", Some(&h.instructor), json!({"course_id": "BUS100", "title": "x"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) =
        h.send_text(Method::POST, "/courses/BUS100/syllabus", Some(&h.student), fixture("bus100.txt")).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = h.get("/courses/BUS100/logs/export", Some(&h.student)).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = h.upload("BUS100", "   \n ").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = h
        .http
        .post(h.url("/courses/BUS100/syllabus"))
        .bearer_auth(&h.instructor)
        .body(vec![0xffu8, 0xfe, 0x00])
        .send()
        .await
        .map(|r| (r.status(), ()))
        .unwrap();
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let ta = h.user("TA", None).await;
    let (status, _) = h.get("/courses/BUS100/logs/export", Some(&ta)).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn admin_token_guards_user_creation() {
    let config = ServiceConfig { admin_token: Some("admin-secret-1".into()), ..fast_config() };
    let h = start(reference(), config).await;
    let (status, _) = h.post_json("/users", None, json!({"role": "INSTRUCTOR", "display_name": "x"})).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = h.post_json("/users", Some("wrong"), json!({"role": "INSTRUCTOR", "display_name": "x"})).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, body) = h.post_json("/users", Some("admin-secret-1"), json!({"role": "TA", "display_name": "x"})).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["role"], "TA");
}

/// Reference backend whose extraction takes a while, so that generation is
/// observably in flight.
struct Slow(ReferenceBackend);

impl LanguageModelGateway for Slow {
    fn provenance(&self) -> Provenance {
        self.0.provenance()
    }
    fn supported_languages(&self) -> Vec<LanguageTag> {
        self.0.supported_languages()
    }
    fn extract(&self, q: &str, d: &[String]) -> Result<Extraction, GatewayError> {
        std::thread::sleep(Duration::from_millis(15));
        self.0.extract(q, d)
    }
    fn rank(&self, q: &str, d: &[String], k: usize) -> Result<Vec<RankedDocument>, GatewayError> {
        self.0.rank(q, d, k)
    }
    fn translate(&self, t: &str, f: &SourceLanguage, to: &LanguageTag) -> Result<Translation, GatewayError> {
        self.0.translate(t, f, to)
    }
    fn sentiment(&self, t: &str) -> Result<Sentiment, GatewayError> {
        self.0.sentiment(t)
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn uploads_are_idempotent_and_guarded_while_generating() {
    let gw = Arc::new(InstrumentedGateway::new(Slow(ReferenceBackend::bundled(&QuestionBank::bundled()))));
    let h = start(Arc::clone(&gw) as _, fast_config()).await;
    h.create_course("BUS100").await;

    let (status, first) = h.upload("BUS100", &fixture("bus100.txt")).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let first: DraftSummary = serde_json::from_str(&first).unwrap();
    assert_eq!(first.status, DraftStatus::Generating);
    assert!(h.state.is_generating("BUS100"));

    let (status, body) = h.upload("BUS100", &fixture("no_ta.txt")).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    let (status, again) = h.upload("BUS100", &fixture("bus100.txt")).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(serde_json::from_str::<DraftSummary>(&again).unwrap().draft_id, first.draft_id);
    let (status, _) = h.get("/courses/BUS100/model/draft", Some(&h.instructor)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let done = h.wait_ready("BUS100").await;
    assert_eq!(done.draft_id, first.draft_id);
    assert_eq!(done.entries, 36);
    let calls = gw.total_calls();

    let (status, body) = h.upload("BUS100", &fixture("bus100.txt")).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let same: DraftSummary = serde_json::from_str(&body).unwrap();
    assert_eq!(same.draft_id, first.draft_id);
    assert_eq!(same.status, DraftStatus::Ready);
    assert_eq!(gw.total_calls(), calls, "identical upload regenerated the draft");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn publish_is_atomic_under_concurrent_asks() {
    let h = Arc::new(start(reference(), fast_config()).await);
    let v2 = h.published_course("BUS100", &fixture("bus100.txt"), "Introduction to Business").await;
    let turns_before = h.state.store.turn_count().unwrap();

    let reviewed = reviewed_jsonl(&h.draft_jsonl("BUS100").await, "Principles of Business");
    assert_eq!(h.put_model("BUS100", reviewed).await.0, StatusCode::OK);

    let askers: Vec<_> = (0..100)
        .map(|i| {
            let h = Arc::clone(&h);
            tokio::spawn(async move {
                let q = if i % 2 == 0 { COURSE_NAME_Q } else { "What is the course number?" };
                (q, h.ask_ok("BUS100", q).await)
            })
        })
        .collect();
    let publisher = {
        let h = Arc::clone(&h);
        tokio::spawn(async move { h.publish("BUS100").await })
    };
    let (status, body) = publisher.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    let v3 = body["version"].as_u64().unwrap();
    assert_eq!(v3, v2 + 1);

    for a in askers {
        let (q, a) = a.await.unwrap();
        assert!(a.model_version == v2 || a.model_version == v3, "version {}", a.model_version);
        if q == COURSE_NAME_Q {
            let expected = if a.model_version == v2 { "Introduction to Business" } else { "Principles of Business" };
            assert_eq!(a.answer, expected, "answer mixes versions");
        }
    }
    assert_eq!(h.state.store.turn_count().unwrap(), turns_before + 100);

    // nothing stale after the swap, even for questions cached under v2
    for _ in 0..3 {
        let a = h.ask_ok("BUS100", COURSE_NAME_Q).await;
        assert_eq!((a.model_version, a.answer.as_str()), (v3, "Principles of Business"));
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn spanish_question_gets_a_spanish_answer() {
    let h = start(reference(), fast_config()).await;
    h.published_course("BUS100", &fixture("bus100.txt"), "Introduction to Business").await;
    let english = h.ask_ok("BUS100", "What is the course number?").await;
    let (status, body) = h.ask("BUS100", "¿Cuál es el número del curso?", None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let spanish: AskResponse = serde_json::from_value(body).unwrap();
    assert_eq!(spanish.lang.as_str(), "es");
    assert_ne!(spanish.answer, english.answer);
    let back = ReferenceBackend::bundled(&QuestionBank::bundled())
        .translate(&spanish.answer, &SourceLanguage::Tag(LanguageTag::new("es")), &LanguageTag::english())
        .unwrap();
    assert_eq!(back.text, english.answer);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn logs_export_as_finetuning_jsonl() {
    let h = start(reference(), fast_config()).await;
    h.published_course("BUS100", &fixture("bus100.txt"), "Introduction to Business").await;
    h.ask_ok("BUS100", "What is the course number?").await;
    let cut = chrono::Utc::now();
    tokio::time::sleep(Duration::from_millis(5)).await;
    h.ask_ok("BUS100", "Who is the janitor?").await;

    let (status, all) = h.get("/courses/BUS100/logs/export", Some(&h.instructor)).await;
    assert_eq!(status, StatusCode::OK);
    let all = parse_finetune_dataset(&all).unwrap();
    assert_eq!(all.len(), 2);
    assert_eq!(all[0].served_answer, "The course number is BUS 100.");
    assert!(all[0].found);
    assert!(!all[1].found);

    let since = cut.to_rfc3339_opts(chrono::SecondsFormat::Micros, true);
    let (_, recent) =
        h.get(&format!("/courses/BUS100/logs/export?since={}", since.replace('+', "%2B")), Some(&h.instructor)).await;
    let recent = parse_finetune_dataset(&recent).unwrap();
    assert_eq!(recent.len(), 1);
    assert_eq!(recent[0].question, "Who is the janitor?");

    let (status, _) = h.get("/courses/BUS100/logs/export?since=yesterday", Some(&h.instructor)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

/// Fails translation and sentiment on demand.
struct Flaky {
    inner: ReferenceBackend,
    down: AtomicBool,
    calls: AtomicUsize,
}

impl Flaky {
    fn check(&self) -> Result<(), GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.down.load(Ordering::SeqCst) {
            Err(GatewayError::Http { status: 503 })
        } else {
            Ok(())
        }
    }
}

impl LanguageModelGateway for Flaky {
    fn provenance(&self) -> Provenance {
        self.inner.provenance()
    }
    fn supported_languages(&self) -> Vec<LanguageTag> {
        self.inner.supported_languages()
    }
    fn extract(&self, q: &str, d: &[String]) -> Result<Extraction, GatewayError> {
        self.check()?;
        self.inner.extract(q, d)
    }
    fn rank(&self, q: &str, d: &[String], k: usize) -> Result<Vec<RankedDocument>, GatewayError> {
        self.check()?;
        self.inner.rank(q, d, k)
    }
    fn translate(&self, t: &str, f: &SourceLanguage, to: &LanguageTag) -> Result<Translation, GatewayError> {
        self.check()?;
        self.inner.translate(t, f, to)
    }
    fn sentiment(&self, t: &str) -> Result<Sentiment, GatewayError> {
        self.check()?;
        self.inner.sentiment(t)
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn gateway_outage_is_a_logged_503() {
    let gw = Arc::new(Flaky {
        inner: ReferenceBackend::bundled(&QuestionBank::bundled()),
        down: AtomicBool::new(false),
        calls: AtomicUsize::new(0),
    });
    let h = start(Arc::clone(&gw) as _, fast_config()).await;
    h.published_course("BUS100", &fixture("bus100.txt"), "Introduction to Business").await;
    gw.down.store(true, Ordering::SeqCst);
    let before = h.state.store.turn_count().unwrap();

    let (status, body) = h.ask("BUS100", "Who grades the labs on weekends?", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["answer"], NOT_FOUND);
    assert_eq!(body["found"], false);
    assert_eq!(body["degraded"], true);
    assert_eq!(h.state.store.turn_count().unwrap(), before + 1);

    // degraded answers are not cached: once the backend is back, the same
    // question is answered normally
    gw.down.store(false, Ordering::SeqCst);
    let (status, body) = h.ask("BUS100", "Who grades the labs on weekends?", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["degraded"], false);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn published_models_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("vta.sqlite3");
    let db = db.to_str().unwrap();
    let (instructor, student) = {
        let h = start_with_store(Arc::new(SqliteStore::open(db).unwrap()), reference(), fast_config()).await;
        h.published_course("BUS100", &fixture("bus100.txt"), "Introduction to Business").await;
        (h.instructor.clone(), h.student.clone())
    };
    let mut h = start_with_store(Arc::new(SqliteStore::open(db).unwrap()), reference(), fast_config()).await;
    h.instructor = instructor;
    h.student = student;
    let a = h.ask_ok("BUS100", "What is the course number?").await;
    assert_eq!(a.answer, "The course number is BUS 100.");
    assert_eq!(a.model_version, 2);
    assert_eq!(h.draft_jsonl("BUS100").await.lines().count(), 36);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn languages_are_advertised() {
    let h = start(reference(), fast_config()).await;
    let (status, body) = h.get("/languages", None).await;
    assert_eq!(status, StatusCode::OK);
    let body: Value = serde_json::from_str(&body).unwrap();
    let langs: Vec<&str> = body["languages"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for l in ["en", "es", "fr", "de"] {
        assert!(langs.contains(&l), "{l}");
    }
}
