use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{sha256_hex, ChatProvider, ChatRequest, Embedder, LlmError, ProviderConfig};
use crate::index::EmbeddingVector;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout,
    Other(String),
}

/// Minimal POST-JSON surface so that retry logic can be tested without a network.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::InvalidRequest(format!("http client: {e}")))?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .timeout(timeout)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Other(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportError::Other(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallLogEntry {
    pub provider: String,
    pub model: String,
    pub operation: String,
    pub prompt_sha256: String,
    pub attempts: u32,
    pub retries: u32,
    pub last_status: Option<u16>,
    pub outcome: String,
    pub elapsed_ms: u64,
}

/// Append-only audit log, kept in memory and optionally mirrored to a JSONL file.
#[derive(Clone, Default)]
pub struct CallLog {
    inner: Arc<Mutex<CallLogInner>>,
}

#[derive(Default)]
struct CallLogInner {
    entries: Vec<CallLogEntry>,
    file: Option<fs::File>,
}

impl CallLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(CallLog {
            inner: Arc::new(Mutex::new(CallLogInner {
                entries: Vec::new(),
                file: Some(file),
            })),
        })
    }

    pub fn record(&self, entry: CallLogEntry) {
        let mut inner = self.inner.lock().expect("call log poisoned");
        if let Some(f) = inner.file.as_mut() {
            // audit logging must not fail the call
            let _ = writeln!(f, "{}", serde_json::to_string(&entry).expect("entry serializes"));
        }
        inner.entries.push(entry);
    }

    pub fn entries(&self) -> Vec<CallLogEntry> {
        self.inner.lock().expect("call log poisoned").entries.clone()
    }
}

/// Blocking token bucket; `capacity` tokens, refilled at `per_second`.
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn per_minute(requests: u32) -> Self {
        let capacity = requests.max(1) as f64;
        TokenBucket {
            capacity,
            per_second: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().expect("bucket poisoned");
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.per_second;
                st.0 = (st.0 + refill).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.per_second)
            };
            thread::sleep(wait);
        }
    }
}

const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Shared request loop: key lookup, rate limiting, retries and logging.
struct Client<T: Transport> {
    config: ProviderConfig,
    transport: T,
    log: Option<CallLog>,
    bucket: Option<TokenBucket>,
    backoff_base: Duration,
}

impl<T: Transport> Client<T> {
    fn new(config: ProviderConfig, transport: T) -> Result<Self, LlmError> {
        config.validate()?;
        let bucket = config.requests_per_minute.map(TokenBucket::per_minute);
        Ok(Client {
            config,
            transport,
            log: None,
            bucket,
            backoff_base: Duration::from_millis(500),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn post(&self, operation: &str, path: &str, body: &Value, logged_text: &str) -> Result<String, LlmError> {
        let key = std::env::var(&self.config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::AuthError(self.config.api_key_env.clone()))?;
        let url = self.url(path);
        let timeout = Duration::from_secs(self.config.request_timeout.max(1));
        let started = Instant::now();
        let mut attempts = 0u32;
        let mut last_status = None;
        let result = loop {
            attempts += 1;
            if let Some(b) = &self.bucket {
                b.acquire();
            }
            let outcome = self.transport.post_json(&url, &key, body, timeout);
            let retryable_err = match outcome {
                Ok(HttpResponse { status, body }) => {
                    last_status = Some(status);
                    if (200..300).contains(&status) {
                        break Ok(body);
                    }
                    if status == 429 {
                        LlmError::RateLimited { attempts }
                    } else if status >= 500 {
                        LlmError::ProviderError { status, body }
                    } else {
                        break Err(LlmError::ProviderError { status, body });
                    }
                }
                Err(TransportError::Timeout) => LlmError::Timeout,
                Err(TransportError::Other(msg)) => break Err(LlmError::ProviderError { status: 0, body: msg }),
            };
            if attempts > self.config.max_retries {
                break Err(retryable_err);
            }
            let factor = 1u32 << (attempts - 1).min(16);
            thread::sleep(self.backoff_base.saturating_mul(factor).min(MAX_BACKOFF));
        };
        if let Some(log) = &self.log {
            log.record(CallLogEntry {
                provider: self.config.base_url.clone(),
                model: self.config.model_id.clone(),
                operation: operation.to_string(),
                prompt_sha256: sha256_hex(logged_text),
                attempts,
                retries: attempts - 1,
                last_status,
                outcome: match &result {
                    Ok(_) => "ok".to_string(),
                    Err(e) => format!("error: {e}"),
                },
                elapsed_ms: started.elapsed().as_millis() as u64,
            });
        }
        result
    }
}

fn malformed(body: &str) -> LlmError {
    let excerpt: String = body.chars().take(200).collect();
    LlmError::ProviderError {
        status: 200,
        body: format!("unexpected response body: {excerpt}"),
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct HttpChatProvider<T: Transport = ReqwestTransport> {
    client: Client<T>,
}

impl HttpChatProvider<ReqwestTransport> {
    pub fn from_config(config: ProviderConfig) -> Result<Self, LlmError> {
        Self::with_transport(config, ReqwestTransport::new()?)
    }
}

impl<T: Transport> HttpChatProvider<T> {
    pub fn with_transport(config: ProviderConfig, transport: T) -> Result<Self, LlmError> {
        Ok(HttpChatProvider {
            client: Client::new(config, transport)?,
        })
    }

    pub fn with_call_log(mut self, log: CallLog) -> Self {
        self.client.log = Some(log);
        self
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.client.backoff_base = base;
        self
    }
}

impl<T: Transport> ChatProvider for HttpChatProvider<T> {
    fn id(&self) -> &str {
        &self.client.config.model_id
    }

    fn chat(&self, request: &ChatRequest) -> Result<String, LlmError> {
        request.validate()?;
        let mut body = json!({
            "model": self.client.config.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        let text = self.client.post("chat", "chat/completions", &body, &request.prompt)?;
        let v: Value = serde_json::from_str(&text).map_err(|_| malformed(&text))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| malformed(&text))
    }
}

/// OpenAI-compatible `POST {base_url}/embeddings` client.
pub struct HttpEmbedder<T: Transport = ReqwestTransport> {
    client: Client<T>,
}

impl HttpEmbedder<ReqwestTransport> {
    pub fn from_config(config: ProviderConfig) -> Result<Self, LlmError> {
        Self::with_transport(config, ReqwestTransport::new()?)
    }
}

impl<T: Transport> HttpEmbedder<T> {
    pub fn with_transport(config: ProviderConfig, transport: T) -> Result<Self, LlmError> {
        Ok(HttpEmbedder {
            client: Client::new(config, transport)?,
        })
    }

    pub fn with_call_log(mut self, log: CallLog) -> Self {
        self.client.log = Some(log);
        self
    }
}

impl<T: Transport> Embedder for HttpEmbedder<T> {
    fn id(&self) -> &str {
        &self.client.config.model_id
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::InvalidRequest("empty text".into()));
        }
        let body = json!({"model": self.client.config.model_id, "input": text});
        let resp = self.client.post("embed", "embeddings", &body, text)?;
        let v: Value = serde_json::from_str(&resp).map_err(|_| malformed(&resp))?;
        let comps: Vec<f64> = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(&resp))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| malformed(&resp)))
            .collect::<Result<_, _>>()?;
        Ok(EmbeddingVector::new(comps)?)
    }
}
