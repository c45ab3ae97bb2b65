//! Layered configuration: built-in defaults, then a TOML file, then `VTA_*`
//! environment variables, then command-line flags.
//!
//! ```toml
//! backend = "reference"        # or "http"
//! max_chars = 200
//! tau_model = 0.5
//! tau_extract = 0.25
//! top_k = 3
//! context_neighbors = 1
//! cache_capacity = 1024
//! cache_ttl_secs = 600
//!
//! [http]
//! endpoint = "http://127.0.0.1:8081/v1/completions"
//! api_key_env = "VTA_LM_API_KEY"
//!
//! [paths]
//! bank = "data/bank.jsonl"
//!
//! [server]
//! bind = "127.0.0.1:8080"
//! database = "vta.sqlite3"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vta_core::gateway::http::{HttpBackend, HttpConfig};
use vta_core::gateway::reference::{Dictionary, LabelLexicon, ReferenceBackend, SentimentLexicon};
use vta_core::ingest::DEFAULT_MAX_CHARS;
use vta_core::knowledge::QuestionBank;
use vta_core::qa::{QaConfig, RetrievalConfig, SupportTemplates};
use vta_service::{DynGateway, ServiceConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("{var}: {message}")]
    Env { var: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{0}")]
    Load(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Reference,
    Http,
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reference" => Ok(Self::Reference),
            "http" => Ok(Self::Http),
            other => Err(format!("unknown backend `{other}` (expected reference or http)")),
        }
    }
}

/// Optional data files replacing the bundled ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub bank: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub sentiment: Option<PathBuf>,
    /// Support-message templates for negative-sentiment framing.
    pub templates: Option<PathBuf>,
    /// Prompt directory for the HTTP backend.
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    /// SQLite path, or `:memory:`.
    pub database: String,
    /// Environment variable holding the admin token for `POST /users`.
    pub admin_token_env: String,
    pub delivery_attempts: u32,
    pub delivery_backoff_ms: u64,
    pub delivery_timeout_ms: u64,
    pub max_poll_ms: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let svc = ServiceConfig::default();
        Self {
            bind: "127.0.0.1:8080".into(),
            database: "vta.sqlite3".into(),
            admin_token_env: "VTA_ADMIN_TOKEN".into(),
            delivery_attempts: svc.delivery_attempts,
            delivery_backoff_ms: svc.delivery_backoff_ms,
            delivery_timeout_ms: svc.delivery_timeout_ms,
            max_poll_ms: svc.max_poll_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub backend: Backend,
    pub http: HttpConfig,
    pub max_chars: usize,
    pub tau_model: f64,
    pub tau_extract: f64,
    pub top_k: usize,
    /// Following chunks appended to each ranked chunk; 0 disables.
    pub context_neighbors: usize,
    pub cache_capacity: usize,
    pub cache_ttl_secs: u64,
    pub paths: DataPaths,
    pub server: ServerConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        let qa = QaConfig::default();
        Self {
            backend: Backend::default(),
            http: HttpConfig::default(),
            max_chars: DEFAULT_MAX_CHARS,
            tau_model: qa.tau_model,
            tau_extract: qa.retrieval.tau_extract,
            top_k: qa.retrieval.top_k,
            context_neighbors: qa.retrieval.context_neighbors,
            cache_capacity: qa.cache_capacity,
            cache_ttl_secs: qa.cache_ttl_secs,
            paths: DataPaths::default(),
            server: ServerConfig::default(),
        }
    }
}

/// Values given on the command line. `None` leaves the lower layers alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub backend: Option<Backend>,
    pub endpoint: Option<String>,
    pub max_chars: Option<usize>,
    pub tau_model: Option<f64>,
    pub tau_extract: Option<f64>,
    pub top_k: Option<usize>,
    pub bank: Option<PathBuf>,
    pub bind: Option<String>,
    pub database: Option<String>,
}

fn env_value<T: FromStr>(env: &dyn Fn(&str) -> Option<String>, var: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match env(var) {
        None => Ok(None),
        Some(raw) if raw.trim().is_empty() => Ok(None),
        Some(raw) => raw
            .trim()
            .parse()
            .map(Some)
            .map_err(|e: T::Err| ConfigError::Env { var: var.into(), message: e.to_string() }),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Replaces the port of `host:port`.
fn with_port(bind: &str, port: u16) -> String {
    let host = bind.rsplit_once(':').map_or(bind, |(h, _)| h);
    format!("{host}:{port}")
}

impl CliConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Resolves the layers. `file` is the config file's path and contents;
    /// `env` looks up environment variables.
    pub fn resolve(
        file: Option<(&Path, &str)>,
        env: &dyn Fn(&str) -> Option<String>,
        flags: &Overrides,
    ) -> Result<Self, ConfigError> {
        let mut c = match file {
            Some((path, text)) => Self::from_toml(text)
                .map_err(|message| ConfigError::File { path: path.display().to_string(), message })?,
            None => Self::default(),
        };

        set(&mut c.backend, env_value(env, "VTA_BACKEND")?);
        set(&mut c.http.endpoint, env_value(env, "VTA_LM_ENDPOINT")?);
        set(&mut c.http.api_key_env, env_value(env, "VTA_LM_KEY_ENV")?);
        set(&mut c.max_chars, env_value(env, "VTA_MAX_CHARS")?);
        set(&mut c.tau_model, env_value(env, "VTA_TAU_MODEL")?);
        set(&mut c.tau_extract, env_value(env, "VTA_TAU_EXTRACT")?);
        set(&mut c.top_k, env_value(env, "VTA_TOP_K")?);
        set(&mut c.cache_capacity, env_value(env, "VTA_CACHE_CAPACITY")?);
        set(&mut c.cache_ttl_secs, env_value(env, "VTA_CACHE_TTL_SECS")?);
        if let Some(bank) = env_value::<PathBuf>(env, "VTA_BANK")? {
            c.paths.bank = Some(bank);
        }
        set(&mut c.server.bind, env_value(env, "VTA_BIND")?);
        if let Some(port) = env_value::<u16>(env, "VTA_PORT")? {
            c.server.bind = with_port(&c.server.bind, port);
        }
        set(&mut c.server.database, env_value(env, "VTA_DATABASE")?);

        set(&mut c.backend, flags.backend);
        set(&mut c.http.endpoint, flags.endpoint.clone());
        set(&mut c.max_chars, flags.max_chars);
        set(&mut c.tau_model, flags.tau_model);
        set(&mut c.tau_extract, flags.tau_extract);
        set(&mut c.top_k, flags.top_k);
        if flags.bank.is_some() {
            c.paths.bank = flags.bank.clone();
        }
        set(&mut c.server.bind, flags.bind.clone());
        set(&mut c.server.database, flags.database.clone());

        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let positive = [
            ("max_chars", self.max_chars as u64),
            ("top_k", self.top_k as u64),
            ("cache_capacity", self.cache_capacity as u64),
            ("cache_ttl_secs", self.cache_ttl_secs),
            ("http.max_tokens", self.http.max_tokens as u64),
            ("http.max_in_flight", self.http.max_in_flight as u64),
            ("http.budget.max_payload_bytes", self.http.budget.max_payload_bytes as u64),
            ("server.delivery_attempts", self.server.delivery_attempts as u64),
            ("server.delivery_timeout_ms", self.server.delivery_timeout_ms),
            ("server.max_poll_ms", self.server.max_poll_ms),
        ];
        for (name, value) in positive {
            if value == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        for (name, value) in [("tau_model", self.tau_model), ("tau_extract", self.tau_extract)] {
            if !(value > 0.0 && value <= 1.0) {
                problems.push(format!("{name} must be in (0, 1], got {value}"));
            }
        }
        if self.http.budget.max_latency.is_zero() {
            problems.push("http.budget.max_latency must be positive".into());
        }
        if !(0.0..=2.0).contains(&self.http.temperature) {
            problems.push("http.temperature must be in [0, 2]".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems.join("; ")))
        }
    }

    pub fn qa(&self) -> QaConfig {
        QaConfig {
            tau_model: self.tau_model,
            retrieval: RetrievalConfig {
                top_k: self.top_k,
                context_neighbors: self.context_neighbors,
                tau_extract: self.tau_extract,
            },
            cache_capacity: self.cache_capacity,
            cache_ttl_secs: self.cache_ttl_secs,
        }
    }

    pub fn service(&self, admin_token: Option<String>) -> ServiceConfig {
        ServiceConfig {
            max_chars: self.max_chars,
            qa: self.qa(),
            admin_token,
            delivery_attempts: self.server.delivery_attempts,
            delivery_backoff_ms: self.server.delivery_backoff_ms,
            delivery_timeout_ms: self.server.delivery_timeout_ms,
            max_poll_ms: self.server.max_poll_ms,
        }
    }

    pub fn bank(&self) -> Result<QuestionBank, ConfigError> {
        match &self.paths.bank {
            Some(path) => QuestionBank::load(path).map_err(|e| ConfigError::Load(format!("{}: {e}", path.display()))),
            None => Ok(QuestionBank::bundled()),
        }
    }

    pub fn templates(&self) -> Result<Option<SupportTemplates>, ConfigError> {
        self.paths
            .templates
            .as_deref()
            .map(|p| SupportTemplates::load(p).map_err(|e| ConfigError::Load(format!("{}: {e}", p.display()))))
            .transpose()
    }

    /// Builds the configured gateway. The HTTP backend uses a blocking client,
    /// so call this outside any async runtime.
    pub fn gateway(&self, bank: &QuestionBank) -> Result<DynGateway, ConfigError> {
        let load_err = |p: &Path, e: &dyn std::fmt::Display| ConfigError::Load(format!("{}: {e}", p.display()));
        match self.backend {
            Backend::Reference => {
                let lexicon = match &self.paths.lexicon {
                    Some(p) => LabelLexicon::load(p).map_err(|e| load_err(p, &e))?,
                    None => LabelLexicon::bundled(),
                };
                let dictionary = match &self.paths.dictionary {
                    Some(p) => Dictionary::load(p).map_err(|e| load_err(p, &e))?,
                    None => Dictionary::bundled(),
                };
                let sentiment = match &self.paths.sentiment {
                    Some(p) => SentimentLexicon::load(p).map_err(|e| load_err(p, &e))?,
                    None => SentimentLexicon::bundled(),
                };
                Ok(Arc::new(ReferenceBackend::new(bank, lexicon, dictionary, sentiment)))
            }
            Backend::Http => {
                let mut http = self.http.clone();
                if self.paths.prompts.is_some() {
                    http.prompt_dir = self.paths.prompts.clone();
                }
                Ok(Arc::new(HttpBackend::new(http).map_err(|e| ConfigError::Load(e.to_string()))?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults_match_the_library_defaults() {
        let c = CliConfig::resolve(None, &env(&[]), &Overrides::default()).unwrap();
        assert_eq!(c.qa(), QaConfig::default());
        assert_eq!(c.max_chars, 200);
        assert_eq!(c.backend, Backend::Reference);
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let file = "max_chars = 300\ntop_k = 4\ntau_model = 0.6\n";
        let path = Path::new("vta.toml");
        let e = env(&[("VTA_MAX_CHARS", "400"), ("VTA_TOP_K", "5")]);
        let flags = Overrides { max_chars: Some(500), ..Overrides::default() };
        let c = CliConfig::resolve(Some((path, file)), &e, &flags).unwrap();
        assert_eq!((c.max_chars, c.top_k, c.tau_model), (500, 5, 0.6));
    }

    #[test]
    fn port_replaces_only_the_port() {
        let c = CliConfig::resolve(None, &env(&[("VTA_BIND", "0.0.0.0:1"), ("VTA_PORT", "9000")]), &Overrides::default())
            .unwrap();
        assert_eq!(c.server.bind, "0.0.0.0:9000");
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for text in ["colour = 1", "[http]\nendpont = \"x\"", "[paths]\nbnk = \"x\"", "[server]\nbnd = \"x\"", "[http.budget]\nmax = 1"] {
            let err = CliConfig::resolve(Some((Path::new("c.toml"), text)), &env(&[]), &Overrides::default()).unwrap_err();
            assert!(err.to_string().contains("unknown field"), "{text}: {err}");
        }
    }

    #[test]
    fn non_positive_knobs_are_rejected() {
        for (var, value) in [("VTA_MAX_CHARS", "0"), ("VTA_TOP_K", "0"), ("VTA_TAU_MODEL", "0"), ("VTA_TAU_EXTRACT", "1.5"), ("VTA_CACHE_CAPACITY", "0")] {
            let err = CliConfig::resolve(None, &env(&[(var, value)]), &Overrides::default()).unwrap_err();
            assert!(matches!(err, ConfigError::Invalid(_)), "{var}={value}: {err}");
        }
        let err = CliConfig::resolve(None, &env(&[("VTA_TOP_K", "many")]), &Overrides::default()).unwrap_err();
        assert!(err.to_string().starts_with("VTA_TOP_K"));
    }

    #[test]
    fn backend_names() {
        assert_eq!("HTTP".parse::<Backend>().unwrap(), Backend::Http);
        assert!("gpt".parse::<Backend>().is_err());
    }
}
