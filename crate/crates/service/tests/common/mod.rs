#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use reqwest::StatusCode;
use serde_json::{json, Value};
use vta_core::gateway::reference::ReferenceBackend;
use vta_core::knowledge::{parse_records, serialize_records, QuestionBank, Verification};
use vta_service::api::{AskResponse, DraftSummary};
use vta_service::store::{DraftStatus, SqliteStore, Store};
use vta_service::{AppState, DynGateway, ServiceConfig};

pub const COURSE_NAME_Q: &str = "What is the name of the course?";

pub fn fixture(name: &str) -> String {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn bank() -> Arc<QuestionBank> {
    Arc::new(QuestionBank::bundled())
}

pub fn reference() -> DynGateway {
    Arc::new(ReferenceBackend::bundled(&QuestionBank::bundled()))
}

pub fn fast_config() -> ServiceConfig {
    ServiceConfig { delivery_backoff_ms: 20, delivery_timeout_ms: 1_000, ..ServiceConfig::default() }
}

pub struct Harness {
    pub base: String,
    pub state: Arc<AppState>,
    pub http: reqwest::Client,
    pub instructor: String,
    pub student: String,
}

pub async fn start(gateway: DynGateway, config: ServiceConfig) -> Harness {
    start_with_store(Arc::new(SqliteStore::in_memory().unwrap()), gateway, config).await
}

pub async fn start_with_store(store: Arc<dyn Store>, gateway: DynGateway, config: ServiceConfig) -> Harness {
    let admin = config.admin_token.clone();
    let state = AppState::new(store, gateway, bank(), config).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(vta_service::serve(listener, Arc::clone(&state)));
    let mut h = Harness { base, state, http: reqwest::Client::new(), instructor: String::new(), student: String::new() };
    h.instructor = h.user("INSTRUCTOR", admin.as_deref()).await;
    h.student = h.user("STUDENT", admin.as_deref()).await;
    h
}

impl Harness {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn user(&self, role: &str, admin: Option<&str>) -> String {
        let mut req = self.http.post(self.url("/users")).json(&json!({"role": role, "display_name": format!("{role} user")}));
        if let Some(a) = admin {
            req = req.bearer_auth(a);
        }
        let resp = req.send().await.unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
        resp.json::<Value>().await.unwrap()["token"].as_str().unwrap().to_string()
    }

    pub async fn post_json(&self, path: &str, token: Option<&str>, body: Value) -> (StatusCode, Value) {
        let mut req = self.http.post(self.url(path)).json(&body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn send_text(&self, method: reqwest::Method, path: &str, token: Option<&str>, body: String) -> (StatusCode, String) {
        let mut req = self.http.request(method, self.url(path)).body(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        (status, resp.text().await.unwrap())
    }

    pub async fn get(&self, path: &str, token: Option<&str>) -> (StatusCode, String) {
        let mut req = self.http.get(self.url(path));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        (status, resp.text().await.unwrap())
    }

    pub async fn create_course(&self, id: &str) {
        let (status, _) = self.post_json("/courses", Some(&self.instructor), json!({"course_id": id, "title": id})).await;
        assert_eq!(status, StatusCode::CREATED);
    }

    pub async fn upload(&self, id: &str, text: &str) -> (StatusCode, String) {
        self.send_text(reqwest::Method::POST, &format!("/courses/{id}/syllabus"), Some(&self.instructor), text.to_string()).await
    }

    pub async fn wait_ready(&self, id: &str) -> DraftSummary {
        for _ in 0..500 {
            let (status, body) = self.get(&format!("/courses/{id}/draft"), Some(&self.instructor)).await;
            assert_eq!(status, StatusCode::OK, "{body}");
            let summary: DraftSummary = serde_json::from_str(&body).unwrap();
            if summary.status != DraftStatus::Generating {
                return summary;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("draft for {id} never finished");
    }

    pub async fn draft_jsonl(&self, id: &str) -> String {
        let (status, body) = self.get(&format!("/courses/{id}/model/draft"), Some(&self.instructor)).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body
    }

    pub async fn put_model(&self, id: &str, jsonl: String) -> (StatusCode, String) {
        self.send_text(reqwest::Method::PUT, &format!("/courses/{id}/model"), Some(&self.instructor), jsonl).await
    }

    pub async fn publish(&self, id: &str) -> (StatusCode, Value) {
        self.post_json(&format!("/courses/{id}/publish"), Some(&self.instructor), json!({})).await
    }

    pub async fn ask(&self, id: &str, question: &str, lang: Option<&str>) -> (StatusCode, Value) {
        self.post_json(&format!("/courses/{id}/ask"), Some(&self.student), json!({"question": question, "lang": lang})).await
    }

    pub async fn ask_ok(&self, id: &str, question: &str) -> AskResponse {
        let (status, body) = self.ask(id, question, None).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        serde_json::from_value(body).unwrap()
    }

    /// Creates the course, uploads `syllabus`, grades every entry TRUE except
    /// the course name, which becomes `course_name`, and publishes.
    pub async fn published_course(&self, id: &str, syllabus: &str, course_name: &str) -> u64 {
        self.create_course(id).await;
        let (status, body) = self.upload(id, syllabus).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{body}");
        assert_eq!(self.wait_ready(id).await.status, DraftStatus::Ready);
        self.review_and_publish(id, course_name).await
    }

    pub async fn review_and_publish(&self, id: &str, course_name: &str) -> u64 {
        let reviewed = reviewed_jsonl(&self.draft_jsonl(id).await, course_name);
        let (status, body) = self.put_model(id, reviewed).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        let (status, body) = self.publish(id).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["version"].as_u64().unwrap()
    }
}

/// Grades every line TRUE except the course name, set FALSE with `course_name`.
pub fn reviewed_jsonl(jsonl: &str, course_name: &str) -> String {
    let mut records = parse_records(jsonl).unwrap();
    for r in &mut records {
        if r.question == COURSE_NAME_Q {
            r.is_true = Verification::False;
            r.answer = course_name.to_string();
        } else {
            r.is_true = Verification::True;
        }
    }
    serialize_records(&records)
}
