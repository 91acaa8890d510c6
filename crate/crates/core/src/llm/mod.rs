//! Chat-style LLM access.
//!
//! Every model call in the crate goes through [`Gateway`]. A gateway runs in
//! one of three modes:
//!
//! * `live`: forward each request to a [`ChatBackend`] (normally the HTTP
//!   adapter in [`http`]).
//! * `record`: like `live`, and append each exchange to a JSON-lines
//!   transcript.
//! * `replay`: answer from previously recorded transcripts only. No network,
//!   no credentials.
//!
//! Transcript entries are keyed by [`request_digest`], a SHA-256 over the
//! model id, messages, temperature and seed.

pub mod http;
pub mod structured;
pub mod transcript;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use structured::{extract_json_object, FieldKind, FieldSpec, StructuredReply};
pub use transcript::{Transcript, TranscriptEntry};

pub const ENV_ENDPOINT: &str = "TRIZ_ENGINE_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "TRIZ_ENGINE_LLM_MODEL";
pub const ENV_KEY: &str = "TRIZ_ENGINE_LLM_KEY";
pub const ENV_MODE: &str = "TRIZ_ENGINE_LLM_MODE";
pub const ENV_TRANSCRIPT_DIR: &str = "TRIZ_ENGINE_TRANSCRIPT_DIR";

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";
pub const DEFAULT_LIVE_MODEL: &str = "gpt-4-1106-preview";
/// Model id under which the shipped fixture transcripts were recorded.
pub const FIXTURE_MODEL: &str = "triz-fixture";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Assistant,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self { messages, temperature: 1.0, max_output: 4096, seed: None }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if let Some(pos) = self.messages.iter().position(|m| m.content.trim().is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("message {pos} is empty")));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_output == 0 {
            return Err(GatewayError::InvalidRequest("max_output must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    pub credential: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub concurrency_cap: usize,
    /// First retry delay; doubles on each further attempt.
    pub backoff_base: Duration,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.to_string(),
            model_id: DEFAULT_LIVE_MODEL.to_string(),
            credential: ENV_KEY.to_string(),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            concurrency_cap: 8,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl ProviderConfig {
    pub fn fixture() -> Self {
        Self { model_id: FIXTURE_MODEL.to_string(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout.is_zero() {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        if self.concurrency_cap == 0 {
            return Err(GatewayError::Config("concurrency_cap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for GatewayMode {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Self::Live),
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            other => Err(GatewayError::Config(format!("unknown LLM mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request timed out after {0} attempt(s)")]
    Timeout(u32),
    #[error("rate limited; gave up after {0} attempt(s)")]
    RateLimited(u32),
    #[error("provider error {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no recorded exchange for request digest {0}")]
    TranscriptMiss(String),
    #[error("unusable structured output: {0}")]
    Structure(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transcript i/o error: {0}")]
    TranscriptIo(String),
}

impl GatewayError {
    /// Errors worth retrying with backoff.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::Timeout(_) | GatewayError::RateLimited(_) | GatewayError::Transport(_) => true,
            GatewayError::Provider { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// Something that turns a request into raw model text.
pub trait ChatBackend: Send + Sync {
    fn send(&self, cfg: &ProviderConfig, req: &GenerationRequest) -> Result<String, GatewayError>;
}

/// Backend from a closure. Handy for tests and fixture generation.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&GenerationRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn send(&self, _cfg: &ProviderConfig, req: &GenerationRequest) -> Result<String, GatewayError> {
        (self.0)(req)
    }
}

#[derive(Serialize)]
struct DigestInput<'a> {
    model_id: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    seed: Option<u64>,
}

/// Stable hex digest of everything that determines a response.
pub fn request_digest(model_id: &str, req: &GenerationRequest) -> String {
    let input = DigestInput { model_id, messages: &req.messages, temperature: req.temperature, seed: req.seed };
    let bytes = serde_json::to_vec(&input).expect("digest input serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Counting semaphore bounding in-flight provider calls.
struct Semaphore {
    available: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { available: Mutex::new(n), released: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.released.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.released.notify_one();
    }
}

/// Shareable handle to a provider in a fixed mode.
pub struct Gateway {
    cfg: ProviderConfig,
    mode: GatewayMode,
    backend: Option<Box<dyn ChatBackend>>,
    transcript: Option<Transcript>,
    permits: Semaphore,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("model_id", &self.cfg.model_id)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    fn build(
        cfg: ProviderConfig,
        mode: GatewayMode,
        backend: Option<Box<dyn ChatBackend>>,
        transcript: Option<Transcript>,
    ) -> Result<Self, GatewayError> {
        cfg.validate()?;
        Ok(Self {
            permits: Semaphore::new(cfg.concurrency_cap),
            cfg,
            mode,
            backend,
            transcript,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        })
    }

    pub fn live(cfg: ProviderConfig, backend: impl ChatBackend + 'static) -> Result<Self, GatewayError> {
        Self::build(cfg, GatewayMode::Live, Some(Box::new(backend)), None)
    }

    /// Live calls, with every exchange appended to `transcript_file`.
    pub fn recording(
        cfg: ProviderConfig,
        backend: impl ChatBackend + 'static,
        transcript_file: impl Into<PathBuf>,
    ) -> Result<Self, GatewayError> {
        let transcript = Transcript::open_for_append(transcript_file.into())?;
        Self::build(cfg, GatewayMode::Record, Some(Box::new(backend)), Some(transcript))
    }

    /// Answers only from the `*.jsonl` transcripts under `dir`.
    pub fn replay(cfg: ProviderConfig, dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let transcript = Transcript::load_dir(dir.into())?;
        Self::build(cfg, GatewayMode::Replay, None, Some(transcript))
    }

    pub fn replay_from(cfg: ProviderConfig, transcript: Transcript) -> Result<Self, GatewayError> {
        Self::build(cfg, GatewayMode::Replay, None, Some(transcript))
    }

    /// Builds a gateway from the `TRIZ_ENGINE_LLM_*` environment.
    ///
    /// The mode defaults to `replay` when a transcript directory is set and
    /// `live` otherwise.
    pub fn from_env() -> Result<Self, GatewayError> {
        let transcript_dir = std::env::var_os(ENV_TRANSCRIPT_DIR).map(PathBuf::from);
        let mode = match std::env::var(ENV_MODE) {
            Ok(m) if !m.trim().is_empty() => m.parse()?,
            _ if transcript_dir.is_some() => GatewayMode::Replay,
            _ => GatewayMode::Live,
        };
        let model_default = if mode == GatewayMode::Replay { FIXTURE_MODEL } else { DEFAULT_LIVE_MODEL };
        let cfg = ProviderConfig {
            endpoint: std::env::var(ENV_ENDPOINT).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string()),
            model_id: std::env::var(ENV_MODEL).unwrap_or_else(|_| model_default.to_string()),
            ..ProviderConfig::default()
        };
        match mode {
            GatewayMode::Live => Self::live(cfg, http::HttpBackend::new()),
            GatewayMode::Record => {
                let dir = transcript_dir
                    .ok_or_else(|| GatewayError::Config(format!("record mode needs {ENV_TRANSCRIPT_DIR}")))?;
                Self::recording(cfg, http::HttpBackend::new(), dir.join("recorded.jsonl"))
            }
            GatewayMode::Replay => {
                let dir = transcript_dir
                    .ok_or_else(|| GatewayError::Config(format!("replay mode needs {ENV_TRANSCRIPT_DIR}")))?;
                Self::replay(cfg, dir)
            }
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    /// Number of `complete` calls answered or attempted so far.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneously in-flight calls observed.
    pub fn peak_concurrency(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn digest(&self, req: &GenerationRequest) -> String {
        request_digest(&self.cfg.model_id, req)
    }

    /// Sends one request and returns the raw model text.
    pub fn complete(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        req.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = self.digest(req);

        if self.mode == GatewayMode::Replay {
            let transcript = self.transcript.as_ref().expect("replay gateway has a transcript");
            return transcript.replay(&digest).ok_or(GatewayError::TranscriptMiss(digest));
        }

        let _permit = self.permits.acquire();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let result = self.send_with_retries(req);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let text = result?;

        if let Some(t) = &self.transcript {
            t.append(TranscriptEntry::new(digest, &self.cfg.model_id, req, &text))?;
        }
        Ok(text)
    }

    fn send_with_retries(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        let backend = self.backend.as_ref().expect("live gateway has a backend");
        let mut attempt = 0u32;
        loop {
            match backend.send(&self.cfg, req) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && attempt < self.cfg.max_retries => {
                    let delay = self.cfg.backoff_base.saturating_mul(1 << attempt.min(16));
                    log::warn!("transient provider error ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => {
                    let attempts = attempt + 1;
                    return Err(match e {
                        GatewayError::RateLimited(_) => GatewayError::RateLimited(attempts),
                        GatewayError::Timeout(_) => GatewayError::Timeout(attempts),
                        other => other,
                    });
                }
            }
        }
    }

    /// Sends a request whose reply must contain a JSON object matching
    /// `schema`. A malformed reply earns one corrective re-prompt.
    pub fn complete_structured(
        &self,
        req: &GenerationRequest,
        schema: &FieldSpec,
    ) -> Result<StructuredReply, GatewayError> {
        let raw = self.complete(req)?;
        let first_problem = match schema.parse(&raw) {
            Ok(record) => return Ok(StructuredReply { record, raw, request: req.clone(), corrected: false }),
            Err(problem) => problem,
        };

        let mut retry = req.clone();
        retry.messages.push(ChatMessage::assistant(raw));
        retry.messages.push(ChatMessage::user(schema.corrective_instruction(&first_problem)));
        let raw = self.complete(&retry)?;
        match schema.parse(&raw) {
            Ok(record) => Ok(StructuredReply { record, raw, request: retry, corrected: true }),
            Err(problem) => Err(GatewayError::Structure(format!("{problem} (first attempt: {first_problem})"))),
        }
    }
}
