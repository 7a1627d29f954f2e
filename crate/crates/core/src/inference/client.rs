use std::fmt;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Connection and sampling settings for an OpenAI-compatible server.
#[derive(Clone, Serialize, Deserialize, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("model_name", &self.model_name)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout_secs", &self.timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("backoff_base_secs", &self.backoff_base_secs)
            .field("temperature", &self.temperature)
            .field("max_tokens", &self.max_tokens)
            .finish()
    }
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000".into(),
            model_name: "default".into(),
            api_key: None,
            timeout_secs: 120.0,
            max_retries: 5,
            backoff_base_secs: 1.0,
            temperature: 0.0,
            max_tokens: 2048,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidConfig(m.into()));
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad("timeout must be positive");
        }
        if !(self.backoff_base_secs > 0.0 && self.backoff_base_secs.is_finite()) {
            return bad("backoff base must be positive");
        }
        if self.base_url.is_empty() {
            return bad("base_url is empty");
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }

    /// Everything that affects generated text. Address, secrets and retry
    /// knobs are left out so they can change between resumed runs.
    pub fn descriptor(&self) -> String {
        format!(
            "model={} temperature={} max_tokens={}",
            self.model_name, self.temperature, self.max_tokens
        )
    }

    /// Request body for a single user message.
    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("gave up after {attempts} attempts: {last}")]
    ExhaustedRetries { attempts: u32, last: String },
    #[error("request rejected with status {status}: {body}")]
    NonRetryable { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
}

/// Outcome of one request attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptError {
    Network(String),
    Status { code: u16, body: String },
    Malformed(String),
}

impl AttemptError {
    pub fn is_retryable(&self) -> bool {
        match self {
            AttemptError::Network(_) => true,
            AttemptError::Status { code, .. } => *code == 429 || (500..600).contains(code),
            AttemptError::Malformed(_) => false,
        }
    }
}

impl fmt::Display for AttemptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttemptError::Network(m) => write!(f, "network error: {m}"),
            AttemptError::Status { code, body } => write!(f, "status {code}: {body}"),
            AttemptError::Malformed(m) => write!(f, "malformed response: {m}"),
        }
    }
}

/// Sends one prompt, no retries.
pub trait Transport: Send + Sync {
    fn send(&self, prompt: &str) -> Result<String, AttemptError>;
}

/// Pulls `choices[0].message.content` out of a response body.
pub fn parse_completion(body: &str) -> Result<String, AttemptError> {
    let v: Value = serde_json::from_str(body).map_err(|e| AttemptError::Malformed(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| AttemptError::Malformed("missing choices[0].message.content".into()))
}

pub struct HttpTransport {
    cfg: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(cfg: EndpointConfig) -> Result<Self, InferenceError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpTransport { cfg, agent })
    }
}

impl Transport for HttpTransport {
    fn send(&self, prompt: &str) -> Result<String, AttemptError> {
        let mut req = self
            .agent
            .post(&self.cfg.completions_url())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = self.cfg.request_body(prompt).to_string();
        let mut resp = req.send(&body).map_err(|e| AttemptError::Network(e.to_string()))?;
        let code = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AttemptError::Network(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(AttemptError::Status { code, body: text });
        }
        parse_completion(&text)
    }
}

/// Anything that turns a prompt into a completion.
pub trait Completer: Sync {
    fn complete(&self, prompt: &str) -> Result<String, InferenceError>;

    /// Identifies the generation settings for run fingerprints.
    fn descriptor(&self) -> String {
        String::new()
    }
}

/// A [`Transport`] wrapped with retry and exponential backoff.
pub struct ChatClient<T: Transport = HttpTransport> {
    cfg: EndpointConfig,
    transport: T,
}

impl ChatClient<HttpTransport> {
    pub fn http(cfg: EndpointConfig) -> Result<Self, InferenceError> {
        let transport = HttpTransport::new(cfg.clone())?;
        Ok(ChatClient { cfg, transport })
    }
}

impl<T: Transport> ChatClient<T> {
    pub fn with_transport(cfg: EndpointConfig, transport: T) -> Result<Self, InferenceError> {
        cfg.validate()?;
        Ok(ChatClient { cfg, transport })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// `base * 2^attempt` plus uniform jitter in `[0, half of that]`.
    fn backoff(&self, attempt: u32) -> Duration {
        let delay = self.cfg.backoff_base_secs * 2f64.powi(attempt as i32);
        let jitter = rand::rng().random_range(0.0..=delay / 2.0);
        Duration::from_secs_f64(delay + jitter)
    }
}

impl<T: Transport> Completer for ChatClient<T> {
    fn complete(&self, prompt: &str) -> Result<String, InferenceError> {
        let mut last = None;
        for attempt in 0..=self.cfg.max_retries {
            match self.transport.send(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if !e.is_retryable() => {
                    return Err(match e {
                        AttemptError::Status { code, body } => InferenceError::NonRetryable { status: code, body },
                        other => InferenceError::MalformedResponse(other.to_string()),
                    })
                }
                Err(e) => {
                    log::debug!("attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                    if attempt < self.cfg.max_retries {
                        std::thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        Err(InferenceError::ExhaustedRetries {
            attempts: self.cfg.max_retries + 1,
            last: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }

    fn descriptor(&self) -> String {
        self.cfg.descriptor()
    }
}

/// One-shot completion against the configured HTTP endpoint.
pub fn chat_complete(cfg: &EndpointConfig, prompt: &str) -> Result<String, InferenceError> {
    ChatClient::http(cfg.clone())?.complete(prompt)
}
