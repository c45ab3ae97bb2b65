//! JSON-over-HTTP completion backend.
//!
//! Wire contract, one POST per capability call:
//!
//! ```text
//! request:  {"model": "...", "prompt": "...", "max_tokens": 256, "temperature": 0.0}
//! response: {"text": "...", "score": 0.93}        // score optional
//! ```
//!
//! The API key, when configured, is sent as `Authorization: Bearer <key>` and
//! read from the environment variable named in [`HttpConfig::api_key_env`].
//! Prompts are rendered from the template files under `data/prompts/v1`.
//!
//! Reply parsing per capability:
//! - extract: the reply text is the answer; the not-found sentinel means
//!   `found == false`. Confidence is `score`, or 1.0 when absent.
//! - rank: the reply text is a JSON array of `{"index", "score"}` objects.
//! - translate: the reply text is a JSON object `{"text", "detected_lang"}`.
//! - sentiment: the reply text is one of NEGATIVE, NEUTRAL, POSITIVE.

use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    order_ranking, Budget, Extraction, GatewayError, LanguageModelGateway, LanguageTag, Provenance,
    RankedDocument, Sentiment, SourceLanguage, Translation,
};
use crate::NOT_FOUND;

#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub extract: String,
    pub rank: String,
    pub translate: String,
    pub sentiment: String,
}

impl PromptTemplates {
    pub fn bundled() -> Self {
        Self {
            extract: include_str!("../../data/prompts/v1/extract.txt").into(),
            rank: include_str!("../../data/prompts/v1/rank.txt").into(),
            translate: include_str!("../../data/prompts/v1/translate.txt").into(),
            sentiment: include_str!("../../data/prompts/v1/sentiment.txt").into(),
        }
    }

    /// Reads `extract.txt`, `rank.txt`, `translate.txt` and `sentiment.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, GatewayError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
        };
        Ok(Self {
            extract: read("extract.txt")?,
            rank: read("rank.txt")?,
            translate: read("translate.txt")?,
            sentiment: read("sentiment.txt")?,
        })
    }
}

fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

fn numbered(documents: &[String]) -> String {
    documents.iter().enumerate().map(|(i, d)| format!("[{i}] {d}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub budget: Budget,
    pub max_in_flight: usize,
    pub max_retries: u32,
    #[serde(with = "backoff_ms")]
    pub backoff: Duration,
    pub languages: Vec<LanguageTag>,
    pub prompt_dir: Option<PathBuf>,
}

mod backoff_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8081/v1/completions".into(),
            model: "completion-default".into(),
            api_key_env: "VTA_LM_API_KEY".into(),
            max_tokens: 256,
            temperature: 0.0,
            budget: Budget::default(),
            max_in_flight: 8,
            max_retries: 2,
            backoff: Duration::from_millis(200),
            languages: ["en", "es", "fr", "de"].iter().map(|t| LanguageTag::new(t)).collect(),
            prompt_dir: None,
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
    score: Option<f64>,
}

/// Counting semaphore for in-flight requests.
struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.count.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    templates: PromptTemplates,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    in_flight: InFlight,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        if config.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        let templates = match &config.prompt_dir {
            Some(dir) => PromptTemplates::load(dir)?,
            None => PromptTemplates::bundled(),
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(config.budget.max_latency)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let in_flight = InFlight { count: Mutex::new(0), freed: Condvar::new(), limit: config.max_in_flight };
        Ok(Self { config, templates, client, api_key, in_flight })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn send_once(&self, body: &[u8]) -> Result<CompletionResponse, GatewayError> {
        let _permit = self.in_flight.acquire();
        let mut req = self
            .client
            .post(&self.config.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.without_url().to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(GatewayError::Http { status: status.as_u16() });
        }
        let bytes = resp.bytes().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.without_url().to_string())
            }
        })?;
        serde_json::from_slice(&bytes).map_err(|e| GatewayError::Malformed(e.to_string()))
    }

    fn complete(&self, prompt: &str) -> Result<CompletionResponse, GatewayError> {
        let body = serde_json::to_vec(&CompletionRequest {
            model: &self.config.model,
            prompt,
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature,
        })
        .expect("request serializes");
        if body.len() > self.config.budget.max_payload_bytes {
            return Err(GatewayError::PayloadTooLarge { size: body.len(), limit: self.config.budget.max_payload_bytes });
        }
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    tracing::warn!(attempt, error = %e, "retrying completion request");
                    std::thread::sleep(self.config.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[derive(Deserialize)]
struct RankItem {
    index: usize,
    score: f64,
}

#[derive(Deserialize)]
struct TranslateReply {
    text: String,
    detected_lang: String,
}

impl LanguageModelGateway for HttpBackend {
    fn provenance(&self) -> Provenance {
        Provenance { backend: "http".into(), model: self.config.model.clone() }
    }

    fn supported_languages(&self) -> Vec<LanguageTag> {
        self.config.languages.clone()
    }

    fn extract(&self, question: &str, documents: &[String]) -> Result<Extraction, GatewayError> {
        if question.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty question".into()));
        }
        if documents.is_empty() {
            return Err(GatewayError::InvalidRequest("no documents".into()));
        }
        let prompt = render(
            &self.templates.extract,
            &[("question", question), ("documents", &numbered(documents)), ("not_found", NOT_FOUND)],
        );
        let reply = self.complete(&prompt)?;
        let answer = reply.text.trim();
        let confidence = reply.score.unwrap_or(1.0).clamp(0.0, 1.0);
        let found = !answer.is_empty() && !answer.trim_end_matches('.').eq_ignore_ascii_case(NOT_FOUND);
        Ok(Extraction {
            answer: if found { answer.to_string() } else { NOT_FOUND.to_string() },
            found,
            confidence,
            provenance: self.provenance(),
        })
    }

    fn rank(&self, query: &str, documents: &[String], k: usize) -> Result<Vec<RankedDocument>, GatewayError> {
        if k == 0 {
            return Err(GatewayError::InvalidRequest("k must be at least 1".into()));
        }
        if documents.is_empty() {
            return Ok(Vec::new());
        }
        let prompt = render(&self.templates.rank, &[("query", query), ("documents", &numbered(documents))]);
        let reply = self.complete(&prompt)?;
        let items: Vec<RankItem> =
            serde_json::from_str(reply.text.trim()).map_err(|e| GatewayError::Malformed(format!("rank reply: {e}")))?;
        let mut seen = vec![false; documents.len()];
        let mut ranked = Vec::new();
        for item in items {
            if item.index >= documents.len() || !item.score.is_finite() {
                return Err(GatewayError::Malformed(format!("rank reply has invalid entry for index {}", item.index)));
            }
            if std::mem::replace(&mut seen[item.index], true) {
                continue;
            }
            ranked.push(RankedDocument { index: item.index, score: item.score.clamp(0.0, 1.0) });
        }
        Ok(order_ranking(ranked, k))
    }

    fn translate(&self, text: &str, from: &SourceLanguage, to: &LanguageTag) -> Result<Translation, GatewayError> {
        let supported = |t: &LanguageTag| self.config.languages.contains(t);
        if !supported(to) {
            return Err(GatewayError::UnsupportedLanguage(to.to_string()));
        }
        if let SourceLanguage::Tag(from) = from {
            if !supported(from) {
                return Err(GatewayError::UnsupportedLanguage(from.to_string()));
            }
            if from == to {
                return Ok(Translation { text: text.to_string(), detected_lang: from.clone() });
            }
        }
        let prompt = render(
            &self.templates.translate,
            &[("text", text), ("from", from.as_key()), ("to", to.as_str())],
        );
        let reply = self.complete(&prompt)?;
        let parsed: TranslateReply = serde_json::from_str(reply.text.trim())
            .map_err(|e| GatewayError::Malformed(format!("translate reply: {e}")))?;
        let detected = match from {
            SourceLanguage::Tag(t) => t.clone(),
            SourceLanguage::Auto => LanguageTag::new(&parsed.detected_lang),
        };
        Ok(Translation { text: parsed.text, detected_lang: detected })
    }

    fn sentiment(&self, text: &str) -> Result<Sentiment, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty text".into()));
        }
        let reply = self.complete(&render(&self.templates.sentiment, &[("text", text)]))?;
        match reply.text.trim().trim_end_matches('.').to_ascii_uppercase().as_str() {
            "NEGATIVE" => Ok(Sentiment::Negative),
            "NEUTRAL" => Ok(Sentiment::Neutral),
            "POSITIVE" => Ok(Sentiment::Positive),
            other => Err(GatewayError::Malformed(format!("sentiment label `{other}`"))),
        }
    }
}
