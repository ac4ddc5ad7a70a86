//! Assessment backends: one call, request in, raw model text out.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{AssessmentMode, AssessmentRequest};
use crate::descriptor::{LocationLabel, QuantityInterval};

#[derive(Debug, Error)]
pub enum BackendError {
    /// Connection failures, timeouts, 429 and 5xx responses.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("cannot read image {path}: {reason}")]
    Image { path: String, reason: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

/// A model service that turns an assessment request into raw text.
pub trait AssessmentBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &AssessmentRequest) -> Result<String, BackendError>;
}

/// Exponential backoff applied to transport errors only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            initial_backoff: Duration::ZERO,
            multiplier: 1.0,
        }
    }

    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .mul_f64(self.multiplier.powi(attempt.saturating_sub(1) as i32))
    }

    /// Calls the backend until it succeeds, fails with a non-transport error,
    /// or the attempt budget runs out. Returns the attempt count alongside.
    pub fn call(
        &self,
        backend: &dyn AssessmentBackend,
        request: &AssessmentRequest,
    ) -> (Result<String, BackendError>, u32) {
        let mut attempt = 1;
        loop {
            match backend.complete(request) {
                Err(e) if e.is_transport() && attempt < self.max_attempts.max(1) => {
                    log::warn!(
                        "{}: attempt {attempt} for {} failed: {e}",
                        backend.name(),
                        request.query_id
                    );
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
                other => return (other, attempt),
            }
        }
    }
}

/// Deterministic offline stand-in for the remote model.
///
/// PLAIN requests get the canonical negative descriptor. Otherwise each field
/// is voted over the references: presence by strict majority, with a tie
/// going to the most similar reference; quantity and location by plurality
/// among the references that agree with the voted presence, with ties going
/// to the tied value held by the most similar such reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn respond(request: &AssessmentRequest) -> String {
        if matches!(request.mode, AssessmentMode::Plain) || request.references.is_empty() {
            return negative_json("mock: no references");
        }
        // References arrive sorted by descending similarity.
        let labels: Vec<_> = request.references.iter().map(|(e, _)| &e.label).collect();
        let yes = labels.iter().filter(|l| l.presence).count();
        let no = labels.len() - yes;
        let presence = match yes.cmp(&no) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => labels[0].presence,
        };
        let explanation = format!("mock: majority of {} references", labels.len());
        if !presence {
            return negative_json(&explanation);
        }
        let agreeing: Vec<_> = labels.iter().filter(|l| l.presence).collect();
        let quantity: QuantityInterval = plurality(agreeing.iter().map(|l| l.quantity));
        let location: LocationLabel = plurality(agreeing.iter().map(|l| l.location));
        json!({
            "presence": true,
            "quantity": quantity.as_str(),
            "location": location.as_str(),
            "explanation": explanation,
        })
        .to_string()
    }
}

fn negative_json(explanation: &str) -> String {
    json!({
        "presence": false,
        "quantity": "NA",
        "location": "NA",
        "explanation": explanation,
    })
    .to_string()
}

/// Most frequent value; ties resolved by first occurrence (most similar).
fn plurality<T: Copy + Eq + std::hash::Hash>(values: impl Iterator<Item = T>) -> T {
    let values: Vec<T> = values.collect();
    let mut counts: HashMap<T, usize> = HashMap::new();
    for v in &values {
        *counts.entry(*v).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    *values
        .iter()
        .find(|v| counts[*v] == best)
        .expect("plurality over a non-empty set")
}

impl AssessmentBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &AssessmentRequest) -> Result<String, BackendError> {
        Ok(Self::respond(request))
    }
}

/// Image attached to a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRef {
    Path(PathBuf),
    Url(String),
    Bytes(Vec<u8>),
}

impl ImageRef {
    /// `http(s)://` strings become URLs, anything else a file path.
    pub fn parse(s: &str) -> Self {
        if s.starts_with("http://") || s.starts_with("https://") {
            ImageRef::Url(s.to_string())
        } else {
            ImageRef::Path(PathBuf::from(s))
        }
    }

    fn to_wire(&self) -> Result<String, BackendError> {
        let b64 = base64::engine::general_purpose::STANDARD;
        match self {
            ImageRef::Url(u) => Ok(u.clone()),
            ImageRef::Bytes(b) => Ok(b64.encode(b)),
            ImageRef::Path(p) => {
                std::fs::read(p)
                    .map(|b| b64.encode(b))
                    .map_err(|e| BackendError::Image {
                        path: p.display().to_string(),
                        reason: e.to_string(),
                    })
            }
        }
    }
}

/// Settings for the HTTP model service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    /// Attach reference images to RAG requests, not just their descriptors.
    pub attach_reference_images: bool,
    pub audit_log: Option<PathBuf>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            url: String::new(),
            api_key: None,
            model: "gpt-4o".into(),
            temperature: 0.0,
            max_output_tokens: 512,
            timeout_secs: 60,
            attach_reference_images: false,
            audit_log: None,
        }
    }
}

impl RemoteConfig {
    /// Applies `PVRAG_BACKEND_URL`, `PVRAG_API_KEY` and `PVRAG_MODEL`.
    pub fn with_env(mut self) -> Self {
        if let Ok(url) = std::env::var("PVRAG_BACKEND_URL") {
            self.url = url;
        }
        if let Ok(key) = std::env::var("PVRAG_API_KEY") {
            self.api_key = Some(key);
        }
        if let Ok(model) = std::env::var("PVRAG_MODEL") {
            self.model = model;
        }
        self
    }
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    output_text: String,
    #[serde(default)]
    usage: serde_json::Value,
}

/// Client for a JSON-over-HTTP model service.
///
/// Request: `{model, prompt, images, max_output_tokens, temperature}`;
/// response: `{output_text, usage}`.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    audit: Option<Mutex<File>>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("url", &self.config.url)
            .field("model", &self.config.model)
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        if config.url.is_empty() {
            return Err(BackendError::Config(
                "no backend URL (set PVRAG_BACKEND_URL or the config file)".into(),
            ));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let audit = match &config.audit_log {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| {
                        BackendError::Config(format!("audit log {}: {e}", path.display()))
                    })?,
            )),
            None => None,
        };
        Ok(RemoteBackend {
            config,
            agent,
            audit,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// The JSON body sent for `request`.
    pub fn wire_request(
        &self,
        request: &AssessmentRequest,
    ) -> Result<serde_json::Value, BackendError> {
        let mut images = Vec::new();
        if let Some(img) = &request.query_image {
            images.push(img.to_wire()?);
        }
        if self.config.attach_reference_images {
            for img in &request.reference_images {
                images.push(img.to_wire()?);
            }
        }
        Ok(json!({
            "model": self.config.model,
            "prompt": request.prompt_text,
            "images": images,
            "max_output_tokens": self.config.max_output_tokens,
            "temperature": self.config.temperature,
        }))
    }

    fn audit(
        &self,
        request: &AssessmentRequest,
        body: &serde_json::Value,
        outcome: serde_json::Value,
    ) {
        let Some(audit) = &self.audit else { return };
        // Image payloads are summarized by size to keep the log line-oriented.
        let mut logged = body.clone();
        if let Some(images) = logged.get_mut("images").and_then(|v| v.as_array_mut()) {
            for img in images.iter_mut() {
                let len = img.as_str().map(str::len).unwrap_or(0);
                *img = json!({ "encoded_len": len });
            }
        }
        let line = json!({
            "query_id": request.query_id,
            "request": logged,
            "response": outcome,
        });
        if let Ok(mut f) = audit.lock() {
            let _ = writeln!(f, "{line}");
        }
    }
}

impl AssessmentBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, request: &AssessmentRequest) -> Result<String, BackendError> {
        let body = self.wire_request(request)?;
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let result = match req.send_json(&body) {
            Err(e) => Err(BackendError::Transport(e.to_string())),
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| BackendError::Transport(e.to_string()));
                match (status, text) {
                    (_, Err(e)) => Err(e),
                    (429 | 500..=599, Ok(t)) => {
                        Err(BackendError::Transport(format!("status {status}: {t}")))
                    }
                    (200..=299, Ok(t)) => Ok(t),
                    (_, Ok(t)) => Err(BackendError::Rejected { status, body: t }),
                }
            }
        };
        let outcome = match &result {
            Ok(t) => serde_json::from_str::<serde_json::Value>(t).unwrap_or_else(|_| json!(t)),
            Err(e) => json!({ "error": e.to_string() }),
        };
        self.audit(request, &body, outcome);
        let text = result?;
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        log::debug!("usage for {}: {}", request.query_id, parsed.usage);
        Ok(parsed.output_text)
    }
}
