//! Chat-completion gateway with live, record and replay modes.
//!
//! All model traffic in the crate passes through [`Gateway::complete`].
//! In record mode every exchange is appended to a [`Transcript`] keyed by
//! the request digest; in replay mode responses are looked up by digest and
//! the transport is never touched.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::digest::sha256_hex;
use crate::error::{self, ErrorCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, text: text.into() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Pipeline stage label. Not part of the digest.
    pub tag: String,
}

/// Hashed view of a request. Fields are listed in sorted order and the tag
/// is left out, so relabelling a stage never invalidates a transcript.
#[derive(Serialize)]
struct CanonicalRequest<'a> {
    max_tokens: u32,
    messages: &'a [ChatMessage],
    temperature: f64,
}

impl ChatRequest {
    pub fn new(tag: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self { messages, temperature: 0.0, max_tokens: 1024, tag: tag.into() }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| GatewayError::InvalidRequest("request has no messages".into()))?;
        if first.role == Role::Assistant {
            return Err(GatewayError::InvalidRequest(
                "first message must come from the system or the user".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Stable hash of the canonical request. Message bodies are hashed
    /// byte-for-byte.
    pub fn digest(&self) -> String {
        let canonical = CanonicalRequest {
            max_tokens: self.max_tokens,
            messages: &self.messages,
            temperature: self.temperature,
        };
        let bytes = serde_json::to_vec(&canonical).expect("request serializes");
        sha256_hex(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Complete,
    Truncated,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

impl ChatResponse {
    pub fn complete(text: impl Into<String>) -> Self {
        Self { text: text.into(), finish_reason: FinishReason::Complete, usage: None }
    }

    fn check(&self) -> Result<(), String> {
        if self.finish_reason == FinishReason::Complete && self.text.is_empty() {
            return Err("complete response with empty text".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptMetadata {
    pub provider: String,
    pub model: String,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub metadata: TranscriptMetadata,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(provider: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            metadata: TranscriptMetadata {
                provider: provider.into(),
                model: model.into(),
                created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            },
            entries: Vec::new(),
        }
    }

    /// Parses a transcript document and re-checks every stored digest.
    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let transcript: Transcript =
            serde_json::from_str(text).map_err(|e| GatewayError::Parse(e.to_string()))?;
        for (index, entry) in transcript.entries.iter().enumerate() {
            let computed = entry.request.digest();
            if computed != entry.digest {
                return Err(GatewayError::DigestMismatch {
                    index,
                    stored: entry.digest.clone(),
                    computed,
                });
            }
        }
        Ok(transcript)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("transcript serializes");
        out.push('\n');
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        std::fs::write(path, self.to_json()).map_err(|e| GatewayError::Io(e.to_string()))
    }

    pub fn find(&self, digest: &str) -> Option<&TranscriptEntry> {
        self.entries.iter().find(|e| e.digest == digest)
    }
}

pub fn load_transcript(path: &Path) -> Result<Transcript, GatewayError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GatewayError::Parse(format!("{}: {e}", path.display())))?;
    Transcript::from_json(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode '{other}' (expected live, record or replay)")),
        }
    }
}

/// Provider settings. The API key is never written to a transcript.
#[derive(Clone, Default)]
pub struct ProviderConfig {
    pub provider: String,
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
}

impl fmt::Debug for ProviderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProviderConfig")
            .field("provider", &self.provider)
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

pub const ENV_API_KEY: &str = "OPENAI_API_KEY";
pub const ENV_BASE_URL: &str = "OPENAI_BASE_URL";
pub const ENV_MODEL: &str = "OPENAI_MODEL";

impl ProviderConfig {
    pub fn from_env() -> Self {
        Self {
            provider: "openai-compatible".into(),
            base_url: std::env::var(ENV_BASE_URL)
                .unwrap_or_else(|_| "https://api.openai.com/v1".into()),
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-3.5-turbo".into()),
            api_key: std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty()),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("provider error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
pub struct ProviderError {
    pub status: Option<u16>,
    pub message: String,
}

impl ProviderError {
    /// Transport failures, rate limits and server errors are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self.status {
            None => true,
            Some(429) => true,
            Some(s) => s >= 500,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("no provider credential configured (set {ENV_API_KEY})")]
    MissingCredential,
    #[error("no recorded response for request {digest} (stage '{tag}'); the pipeline has drifted from the transcript")]
    MissingFixture { digest: String, tag: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("transcript parse error: {0}")]
    Parse(String),
    #[error("transcript entry {index}: stored digest {stored} does not match recomputed {computed}")]
    DigestMismatch { index: usize, stored: String, computed: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl ErrorCode for GatewayError {
    fn code(&self) -> &'static str {
        match self {
            GatewayError::MissingCredential => error::MISSING_CREDENTIAL,
            GatewayError::MissingFixture { .. } => error::MISSING_FIXTURE,
            GatewayError::Provider(_) => error::PROVIDER_ERROR,
            GatewayError::InvalidRequest(_) => error::BAD_REQUEST,
            GatewayError::Parse(_) => error::PARSE_ERROR,
            GatewayError::DigestMismatch { .. } => error::DIGEST_MISMATCH,
            GatewayError::Io(_) => error::STORAGE_ERROR,
        }
    }
}

/// Something that can deliver a chat request to a model.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn send(
        &self,
        request: &ChatRequest,
        provider: &ProviderConfig,
    ) -> Result<ChatResponse, ProviderError>;
}

/// OpenAI-compatible `/chat/completions` transport.
pub struct HttpTransport {
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client builds"),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u32,
    completion_tokens: u32,
}

#[async_trait]
impl Transport for HttpTransport {
    async fn send(
        &self,
        request: &ChatRequest,
        provider: &ProviderConfig,
    ) -> Result<ChatResponse, ProviderError> {
        let messages: Vec<_> = request
            .messages
            .iter()
            .map(|m| serde_json::json!({ "role": m.role, "content": m.text }))
            .collect();
        let body = serde_json::json!({
            "model": provider.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let url = format!("{}/chat/completions", provider.base_url.trim_end_matches('/'));
        let mut builder = self.client.post(url).json(&body);
        if let Some(key) = &provider.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| ProviderError { status: None, message: e.to_string() })?;
        let status = response.status();
        if !status.is_success() {
            let message = response.text().await.unwrap_or_default();
            return Err(ProviderError { status: Some(status.as_u16()), message });
        }
        let wire: WireResponse = response.json().await.map_err(|e| ProviderError {
            status: Some(status.as_u16()),
            message: format!("malformed completion body: {e}"),
        })?;
        let choice = wire.choices.into_iter().next().ok_or_else(|| ProviderError {
            status: Some(status.as_u16()),
            message: "completion has no choices".into(),
        })?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("stop") | None => FinishReason::Complete,
            Some("length") => FinishReason::Truncated,
            Some(_) => FinishReason::Error,
        };
        Ok(ChatResponse {
            text: choice.message.content.unwrap_or_default(),
            finish_reason,
            usage: wire.usage.map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }
}

/// Transport backed by a closure. Used for fixture authoring and tests.
pub struct FnTransport<F>(pub F);

#[async_trait]
impl<F> Transport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, ProviderError> + Send + Sync,
{
    async fn send(
        &self,
        request: &ChatRequest,
        _provider: &ProviderConfig,
    ) -> Result<ChatResponse, ProviderError> {
        (self.0)(request)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self { max_retries: 3, base_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt)
    }
}

pub struct Gateway {
    mode: Mode,
    provider: ProviderConfig,
    transport: Option<Arc<dyn Transport>>,
    retry: RetryPolicy,
    permits: Semaphore,
    // Single writer: all appends happen under this lock.
    transcript: Mutex<Transcript>,
    index: HashMap<String, usize>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("provider", &self.provider)
            .finish_non_exhaustive()
    }
}

pub const DEFAULT_CONCURRENCY: usize = 4;

impl Gateway {
    pub fn live(provider: ProviderConfig, transport: Arc<dyn Transport>) -> Self {
        Self::build(Mode::Live, provider, Some(transport), None)
    }

    pub fn record(provider: ProviderConfig, transport: Arc<dyn Transport>) -> Self {
        Self::build(Mode::Record, provider, Some(transport), None)
    }

    pub fn replay(transcript: Transcript) -> Self {
        let provider = ProviderConfig {
            provider: transcript.metadata.provider.clone(),
            model: transcript.metadata.model.clone(),
            ..ProviderConfig::default()
        };
        Self::build(Mode::Replay, provider, None, Some(transcript))
    }

    fn build(
        mode: Mode,
        provider: ProviderConfig,
        transport: Option<Arc<dyn Transport>>,
        transcript: Option<Transcript>,
    ) -> Self {
        let transcript = transcript
            .unwrap_or_else(|| Transcript::new(provider.provider.clone(), provider.model.clone()));
        let mut index = HashMap::new();
        for (i, entry) in transcript.entries.iter().enumerate() {
            // First recorded response wins for repeated digests.
            index.entry(entry.digest.clone()).or_insert(i);
        }
        Self {
            mode,
            provider,
            transport,
            retry: RetryPolicy::default(),
            permits: Semaphore::new(DEFAULT_CONCURRENCY),
            transcript: Mutex::new(transcript),
            index,
        }
    }

    /// Attaches a transport. In replay mode it is held but never called.
    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.permits = Semaphore::new(limit.max(1));
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn provider(&self) -> &ProviderConfig {
        &self.provider
    }

    /// Snapshot of the transcript (the recording so far, or the loaded one).
    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().expect("transcript lock").clone()
    }

    pub async fn complete(&self, request: ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        match self.mode {
            Mode::Replay => self.lookup(&request),
            Mode::Live => self.call_provider(&request).await,
            Mode::Record => {
                let response = self.call_provider(&request).await?;
                let entry = TranscriptEntry {
                    digest: request.digest(),
                    request,
                    response: response.clone(),
                };
                self.transcript.lock().expect("transcript lock").entries.push(entry);
                Ok(response)
            }
        }
    }

    fn lookup(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let digest = request.digest();
        let transcript = self.transcript.lock().expect("transcript lock");
        match self.index.get(&digest) {
            Some(&i) => Ok(transcript.entries[i].response.clone()),
            None => Err(GatewayError::MissingFixture { digest, tag: request.tag.clone() }),
        }
    }

    async fn call_provider(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if self.provider.api_key.is_none() {
            return Err(GatewayError::MissingCredential);
        }
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| GatewayError::InvalidRequest("no transport configured".into()))?;
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        let mut attempt = 0;
        loop {
            match transport.send(request, &self.provider).await {
                Ok(response) => {
                    response.check().map_err(|message| ProviderError { status: None, message })?;
                    return Ok(response);
                }
                Err(err) if err.is_transient() && attempt < self.retry.max_retries => {
                    tracing::warn!(tag = %request.tag, attempt, "transient provider failure: {err}");
                    tokio::time::sleep(self.retry.delay(attempt)).await;
                    attempt += 1;
                }
                Err(err) => return Err(err.into()),
            }
        }
    }
}
