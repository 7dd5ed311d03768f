//! Chat-completion and embedding backends behind one contract.
//!
//! Backends: [`HttpProvider`] (chat-completions style HTTP API),
//! [`ScriptedProvider`] (canned replies from a fixture), [`ReplayProvider`]
//! (responses from a recording or a transcript), [`RecordingProvider`] (logs
//! every exchange of a wrapped backend) and [`HashEmbedder`] (deterministic
//! feature-hashing embeddings).

use std::collections::VecDeque;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const ENV_API_KEY: &str = "REQLOOP_API_KEY";
pub const ENV_API_BASE: &str = "REQLOOP_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RequestPayload {
    Chat { messages: Vec<ChatMessage> },
    Embed { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub model: String,
    pub payload: RequestPayload,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_seconds: f64,
}

impl ProviderRequest {
    pub fn chat(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model: model.into(),
            payload: RequestPayload::Chat { messages },
            temperature: 0.0,
            max_output_tokens: 1024,
            timeout_seconds: 120.0,
        }
    }

    pub fn embed(model: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            payload: RequestPayload::Embed { text: text.into() },
            temperature: 0.0,
            max_output_tokens: 0,
            timeout_seconds: 60.0,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        match &self.payload {
            RequestPayload::Chat { messages } if messages.is_empty() => Err(
                ProviderError::InvalidRequest("chat request without messages".into()),
            ),
            RequestPayload::Embed { text } if text.is_empty() => Err(
                ProviderError::InvalidRequest("embed request with empty text".into()),
            ),
            _ => Ok(()),
        }
    }

    fn is_chat(&self) -> bool {
        matches!(self.payload, RequestPayload::Chat { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ResponsePayload {
    Text(String),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Self) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub payload: ResponsePayload,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub latency_ms: f64,
}

impl ProviderResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            payload: ResponsePayload::Text(text.into()),
            usage: Usage::default(),
            latency_ms: 0.0,
        }
    }

    pub fn into_text(self) -> Result<String, ProviderError> {
        match self.payload {
            ResponsePayload::Text(t) => Ok(t),
            ResponsePayload::Vector(_) => Err(ProviderError::KindMismatch),
        }
    }

    pub fn into_vector(self) -> Result<Vec<f64>, ProviderError> {
        match self.payload {
            ResponsePayload::Vector(v) => Ok(v),
            ResponsePayload::Text(_) => Err(ProviderError::KindMismatch),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failure: {0}")]
    AuthFailure(String),
    #[error("model refused: {0}")]
    ContentRefusal(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("scripted responses exhausted")]
    QueueExhausted,
    #[error("response kind does not match request kind")]
    KindMismatch,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
}

impl ProviderError {
    /// Transport-level failures worth retrying. Model-content errors never are.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Timeout | ProviderError::Transport(_) => true,
            ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ProviderError::Timeout => "timeout",
            ProviderError::Transport(_) => "transport",
            ProviderError::AuthFailure(_) => "auth",
            ProviderError::ContentRefusal(_) => "refusal",
            ProviderError::Http { .. } => "http",
            ProviderError::QueueExhausted => "exhausted",
            ProviderError::KindMismatch => "kind_mismatch",
            ProviderError::InvalidRequest(_) => "invalid_request",
            ProviderError::MalformedResponse(_) => "malformed",
            ProviderError::Io { .. } | ProviderError::Fixture { .. } => "io",
        }
    }

    fn from_kind(kind: &str, message: String) -> Self {
        match kind {
            "timeout" => ProviderError::Timeout,
            "auth" => ProviderError::AuthFailure(message),
            "refusal" => ProviderError::ContentRefusal(message),
            "exhausted" => ProviderError::QueueExhausted,
            "kind_mismatch" => ProviderError::KindMismatch,
            "invalid_request" => ProviderError::InvalidRequest(message),
            "malformed" => ProviderError::MalformedResponse(message),
            _ => ProviderError::Transport(message),
        }
    }
}

/// A chat/embedding backend. Implementations must be shareable across
/// concurrently running sessions.
pub trait Provider: Send + Sync {
    fn send(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;

    fn name(&self) -> String {
        std::any::type_name::<Self>()
            .rsplit("::")
            .next()
            .unwrap_or("provider")
            .to_string()
    }
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn send(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        (**self).send(request)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

/// One canned fixture entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedReply {
    Text(String),
    Vector { vector: Vec<f64> },
    Error { error: String },
}

/// Returns canned replies in order; fully deterministic and offline.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<ScriptedReply>>,
    requests: Mutex<Vec<ProviderRequest>>,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new(replies: impl IntoIterator<Item = ScriptedReply>) -> Self {
        Self {
            queue: Mutex::new(replies.into_iter().collect()),
            ..Default::default()
        }
    }

    pub fn texts<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|s| ScriptedReply::Text(s.into())))
    }

    /// Reads a JSON array of replies.
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path).map_err(|source| ProviderError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let replies: Vec<ScriptedReply> =
            serde_json::from_str(&text).map_err(|e| ProviderError::Fixture {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(Self::new(replies))
    }

    /// Number of `send` calls so far, including failed ones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("scripted queue poisoned").len()
    }

    pub fn requests(&self) -> Vec<ProviderRequest> {
        self.requests.lock().expect("scripted log poisoned").clone()
    }
}

impl Provider for ScriptedProvider {
    fn send(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        request.validate()?;
        self.requests
            .lock()
            .expect("scripted log poisoned")
            .push(request.clone());
        let reply = self
            .queue
            .lock()
            .expect("scripted queue poisoned")
            .pop_front()
            .ok_or(ProviderError::QueueExhausted)?;
        let payload = match reply {
            ScriptedReply::Text(t) => ResponsePayload::Text(t),
            ScriptedReply::Vector { vector } => ResponsePayload::Vector(vector),
            ScriptedReply::Error { error } => {
                return Err(ProviderError::from_kind(&error, format!("scripted {error}")))
            }
        };
        if request.is_chat() != matches!(payload, ResponsePayload::Text(_)) {
            return Err(ProviderError::KindMismatch);
        }
        Ok(ProviderResponse {
            payload,
            usage: Usage::default(),
            latency_ms: 0.0,
        })
    }

    fn name(&self) -> String {
        "scripted".into()
    }
}

/// A recorded outcome: either a response or a typed failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordedOutcome {
    Response(ProviderResponse),
    Error { kind: String, message: String },
}

impl RecordedOutcome {
    fn from_result(result: &Result<ProviderResponse, ProviderError>) -> Self {
        match result {
            Ok(r) => RecordedOutcome::Response(r.clone()),
            Err(e) => RecordedOutcome::Error {
                kind: e.kind().into(),
                message: e.to_string(),
            },
        }
    }

    fn into_result(self) -> Result<ProviderResponse, ProviderError> {
        match self {
            RecordedOutcome::Response(r) => Ok(r),
            RecordedOutcome::Error { kind, message } => Err(ProviderError::from_kind(&kind, message)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub seq: u64,
    pub request: ProviderRequest,
    pub outcome: RecordedOutcome,
}

/// Appends every request/outcome pair of the wrapped backend to a JSON-lines
/// log. Appends are serialized.
pub struct RecordingProvider<P> {
    inner: P,
    log: Mutex<(File, u64)>,
    path: PathBuf,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P, path: &Path) -> Result<Self, ProviderError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| ProviderError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            inner,
            log: Mutex::new((file, 0)),
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn send(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let result = self.inner.send(request);
        let mut guard = self.log.lock().expect("recording log poisoned");
        let (file, seq) = &mut *guard;
        let entry = RecordEntry {
            seq: *seq,
            request: request.clone(),
            outcome: RecordedOutcome::from_result(&result),
        };
        *seq += 1;
        let line = serde_json::to_string(&entry).expect("record serialization is infallible");
        writeln!(file, "{line}")
            .and_then(|_| file.flush())
            .map_err(|source| ProviderError::Io {
                path: self.path.clone(),
                source,
            })?;
        result
    }

    fn name(&self) -> String {
        format!("recording({})", self.inner.name())
    }
}

/// Plays back previously observed outcomes in order.
#[derive(Debug, Default)]
pub struct ReplayProvider {
    outcomes: Mutex<VecDeque<RecordedOutcome>>,
    calls: AtomicUsize,
}

impl ReplayProvider {
    pub fn new(outcomes: impl IntoIterator<Item = RecordedOutcome>) -> Self {
        Self {
            outcomes: Mutex::new(outcomes.into_iter().collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            texts
                .into_iter()
                .map(|t| RecordedOutcome::Response(ProviderResponse::text(t))),
        )
    }

    /// Loads a log written by [`RecordingProvider`].
    pub fn from_log(path: &Path) -> Result<Self, ProviderError> {
        let io_err = |source| ProviderError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::open(path).map_err(io_err)?;
        let mut outcomes = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: RecordEntry = serde_json::from_str(&line).map_err(|e| ProviderError::Fixture {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", n + 1),
            })?;
            outcomes.push(entry.outcome);
        }
        Ok(Self::new(outcomes))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.outcomes.lock().expect("replay queue poisoned").len()
    }
}

impl Provider for ReplayProvider {
    fn send(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        request.validate()?;
        let outcome = self
            .outcomes
            .lock()
            .expect("replay queue poisoned")
            .pop_front()
            .ok_or(ProviderError::QueueExhausted)?;
        outcome.into_result()
    }

    fn name(&self) -> String {
        "replay".into()
    }
}

/// Deterministic embeddings by feature hashing: each lowercase alphanumeric
/// token adds a pseudo-random vector derived from its hash and the seed.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self {
            dimension: 64,
            seed: 0x5eed,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self { dimension, seed }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let lower = text.to_lowercase();
        let mut tokens: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push(lower.as_str());
        }
        let mut v = vec![0.0; self.dimension];
        for token in tokens {
            let base = fnv1a(token.as_bytes()) ^ self.seed;
            for (d, slot) in v.iter_mut().enumerate() {
                let bits = splitmix64(base.wrapping_add((d as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
                *slot += (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
            }
        }
        v
    }
}

impl Provider for HashEmbedder {
    fn send(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        request.validate()?;
        match &request.payload {
            RequestPayload::Embed { text } => Ok(ProviderResponse {
                payload: ResponsePayload::Vector(self.embed_text(text)),
                usage: Usage::default(),
                latency_ms: 0.0,
            }),
            RequestPayload::Chat { .. } => Err(ProviderError::KindMismatch),
        }
    }

    fn name(&self) -> String {
        format!("hash-embedder(dim={})", self.dimension)
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl HttpConfig {
    /// Endpoint and credential from `REQLOOP_API_BASE` / `REQLOOP_API_KEY`.
    pub fn from_env() -> Self {
        Self {
            base_url: std::env::var(ENV_API_BASE).unwrap_or_else(|_| DEFAULT_API_BASE.into()),
            api_key: std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty()),
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

/// Chat-completions style HTTP backend (`/chat/completions`, `/embeddings`).
pub struct HttpProvider {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn url(&self, endpoint: &str) -> String {
        format!("{}/{endpoint}", self.config.base_url.trim_end_matches('/'))
    }

    fn body(request: &ProviderRequest) -> (&'static str, Value) {
        match &request.payload {
            RequestPayload::Chat { messages } => (
                "chat/completions",
                json!({
                    "model": request.model,
                    "messages": messages,
                    "temperature": request.temperature,
                    "max_tokens": request.max_output_tokens,
                }),
            ),
            RequestPayload::Embed { text } => (
                "embeddings",
                json!({ "model": request.model, "input": text }),
            ),
        }
    }

    fn attempt(&self, request: &ProviderRequest, key: &str) -> Result<ProviderResponse, ProviderError> {
        let (endpoint, body) = Self::body(request);
        let started = Instant::now();
        let response = self
            .client
            .post(self.url(endpoint))
            .bearer_auth(key)
            .timeout(Duration::from_secs_f64(request.timeout_seconds.max(0.001)))
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    ProviderError::Timeout
                } else {
                    ProviderError::Transport(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        if status == 401 || status == 403 {
            return Err(ProviderError::AuthFailure(format!("status {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(ProviderError::Http { status, body: text });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
        let usage = Usage {
            input_tokens: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            output_tokens: value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        let payload = match request.payload {
            RequestPayload::Chat { .. } => {
                let choice = &value["choices"][0];
                if let Some(refusal) = choice["message"]["refusal"].as_str() {
                    return Err(ProviderError::ContentRefusal(refusal.to_string()));
                }
                if choice["finish_reason"] == "content_filter" {
                    return Err(ProviderError::ContentRefusal("content_filter".into()));
                }
                let content = choice["message"]["content"]
                    .as_str()
                    .ok_or_else(|| ProviderError::MalformedResponse("missing message content".into()))?;
                ResponsePayload::Text(content.to_string())
            }
            RequestPayload::Embed { .. } => {
                let vector = value["data"][0]["embedding"]
                    .as_array()
                    .ok_or_else(|| ProviderError::MalformedResponse("missing embedding".into()))?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| ProviderError::MalformedResponse("non-numeric embedding".into())))
                    .collect::<Result<Vec<_>, _>>()?;
                ResponsePayload::Vector(vector)
            }
        };
        Ok(ProviderResponse {
            payload,
            usage,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
        })
    }
}

impl Provider for HttpProvider {
    fn send(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        request.validate()?;
        let key = self
            .config
            .api_key
            .as_deref()
            .ok_or_else(|| ProviderError::AuthFailure(format!("{ENV_API_KEY} is not set")))?;
        let attempts = self.config.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.attempt(request, key) {
                Err(e) if e.is_transient() && attempt < attempts => {
                    let wait = self.config.backoff_base * 2u32.pow(attempt - 1);
                    log::warn!("provider attempt {attempt}/{attempts} failed: {e}; retrying in {wait:?}");
                    thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn name(&self) -> String {
        format!("http({})", self.config.base_url)
    }
}
