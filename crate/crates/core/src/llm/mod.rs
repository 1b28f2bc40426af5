//! Chat and embedding providers: HTTP clients, a deterministic mock, a
//! bounded-parallelism gateway, and structured-output extraction.

mod extract;
mod gateway;
mod http;
mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{EmbeddingVector, IndexError};

pub use extract::{extract_structured, normalize_bool, ExtractError};
pub use gateway::{Gateway, Semaphore, DEFAULT_MAX_IN_FLIGHT};
pub use http::{
    CallLog, CallLogEntry, HttpChatProvider, HttpEmbedder, HttpResponse, ReqwestTransport, TokenBucket, Transport,
    TransportError,
};
pub use mock::{Fixture, MockChatProvider, MockEmbedder, PromptKind};

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2048;
pub const MAX_RETRIES_LIMIT: u32 = 8;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("API key variable `{0}` is not set")]
    AuthError(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out")]
    Timeout,
    #[error("provider returned {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
    #[error("embedding: {0}")]
    Embedding(#[from] IndexError),
}

impl LlmError {
    /// Whether the error should be reported as a provider/tool failure rather
    /// than a configuration problem.
    pub fn is_transient(&self) -> bool {
        matches!(self, LlmError::RateLimited { .. } | LlmError::Timeout)
            || matches!(self, LlmError::ProviderError { status, .. } if *status == 429 || *status >= 500)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_id: String,
    /// Forwarded to providers that support seeded sampling; drives the mock.
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        ChatRequest {
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            model_id: model_id.into(),
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.trim().is_empty() {
            return Err(LlmError::InvalidRequest("empty prompt".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub model_id: String,
    #[serde(default = "default_timeout")]
    pub request_timeout: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Token-bucket refill rate; `None` disables client-side limiting.
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> u32 {
    3
}

impl ProviderConfig {
    pub fn new(base_url: &str, api_key_env: &str, model_id: &str) -> Self {
        ProviderConfig {
            base_url: base_url.to_string(),
            api_key_env: api_key_env.to_string(),
            model_id: model_id.to_string(),
            request_timeout: default_timeout(),
            max_retries: default_retries(),
            requests_per_minute: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(LlmError::InvalidRequest(format!(
                "max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                self.max_retries
            )));
        }
        if self.model_id.trim().is_empty() {
            return Err(LlmError::InvalidRequest("empty model_id".into()));
        }
        Ok(())
    }
}

pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    fn chat(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, LlmError>;
}

/// Hex SHA-256 of UTF-8 text.
pub fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(text.as_bytes()))
}
