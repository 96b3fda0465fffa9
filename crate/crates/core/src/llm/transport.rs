use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::{ChatRequest, LlmError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    /// Rate limits, server errors, timeouts and connection failures.
    #[error("transient failure: {0}")]
    Retryable(String),
    /// Client errors that will not succeed on retry.
    #[error("status {status}: {message}")]
    Fatal { status: u16, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl From<TransportError> for LlmError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Retryable(message) => LlmError::Exhausted {
                attempts: 1,
                message,
            },
            TransportError::Fatal { status, message } => LlmError::Rejected { status, message },
            TransportError::Malformed(m) => LlmError::Malformed(m),
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &ChatRequest) -> Result<Completion, TransportError>;
}

/// POSTs to `{base_url}/v1/chat/completions`.
#[derive(Debug)]
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        let base = base_url.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        HttpTransport {
            agent,
            url: format!("{base}/v1/chat/completions"),
            api_key,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

pub(crate) fn request_body(req: &ChatRequest) -> Value {
    let mut body = json!({
        "model": req.model,
        "messages": req.messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    });
    if let Some(seed) = req.seed {
        body["seed"] = json!(seed);
    }
    body
}

pub(crate) fn parse_completion(body: &str) -> Result<Completion, TransportError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| TransportError::Malformed(e.to_string()))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))?;
    let tokens = |field: &str| v.pointer(&format!("/usage/{field}")).and_then(Value::as_u64);
    Ok(Completion {
        text: text.to_string(),
        prompt_tokens: tokens("prompt_tokens").unwrap_or(0),
        completion_tokens: tokens("completion_tokens").unwrap_or(0),
    })
}

impl Transport for HttpTransport {
    fn send(&self, req: &ChatRequest) -> Result<Completion, TransportError> {
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(request_body(req))
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        match status {
            200..=299 => parse_completion(&body),
            429 | 500..=599 => Err(TransportError::Retryable(format!("status {status}"))),
            _ => Err(TransportError::Fatal {
                status,
                message: body.chars().take(500).collect(),
            }),
        }
    }
}
