use std::time::Duration;

use base64::Engine;
use log::{debug, info};
use serde_json::{json, Value};
use thiserror::Error;

use crate::detection::PageImage;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("MissingKey: environment variable {0} is not set")]
    MissingKey(String),
    #[error("Transport: {0}")]
    Transport(String),
    #[error("HttpStatus: {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("BadResponse: {0}")]
    BadResponse(String),
    #[error("EmptyResponse: nothing usable in the generator output")]
    EmptyResponse,
    #[error("{0}")]
    Other(String),
}

/// One atomic region to generate code for.
#[derive(Debug, Clone)]
pub struct SnippetRequest {
    /// Depth-first leaf index.
    pub node_id: usize,
    pub crop: PageImage,
    pub prompt: String,
}

/// Produces raw code text for a cropped region. Implementations are shared
/// across worker threads.
pub trait SnippetClient: Send + Sync {
    fn name(&self) -> &str;

    fn generate(&self, request: &SnippetRequest) -> Result<String, ClientError>;
}

/// Deterministic placeholder generator; output depends only on the node id
/// and crop dimensions.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockClient;

impl SnippetClient for MockClient {
    fn name(&self) -> &str {
        "mock"
    }

    fn generate(&self, request: &SnippetRequest) -> Result<String, ClientError> {
        let (w, h) = (request.crop.width(), request.crop.height());
        Ok(format!(
            "<div class=\"placeholder\" data-node=\"{}\"><p>region {} ({}x{})</p></div>",
            request.node_id, request.node_id, w, h
        ))
    }
}

/// HTTP client for a hosted multimodal model.
///
/// Sends one JSON POST per region:
/// `{"model", "prompt", "image": {"media_type", "data"}, "max_tokens", "temperature"}`
/// with the key as a bearer token. Accepts a plain `{"text": ...}` reply as
/// well as the common chat- and message-style response shapes.
pub struct RemoteClient {
    endpoint: String,
    model: String,
    api_key: String,
    max_tokens: u32,
    temperature: f64,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &"***")
            .finish()
    }
}

impl RemoteClient {
    pub const MAX_TOKENS: u32 = 4096;

    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key.into(),
            max_tokens: Self::MAX_TOKENS,
            temperature: 0.0,
            http,
        })
    }

    /// Read the API key from the named environment variable.
    pub fn from_env(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        key_env: &str,
        timeout: Duration,
    ) -> Result<Self, ClientError> {
        let key = std::env::var(key_env).map_err(|_| ClientError::MissingKey(key_env.to_string()))?;
        Self::new(endpoint, model, key, timeout)
    }

    pub fn request_body(&self, request: &SnippetRequest) -> Result<Value, ClientError> {
        let png = request.crop.encode_png().map_err(|e| ClientError::Other(e.to_string()))?;
        Ok(json!({
            "model": self.model,
            "prompt": request.prompt,
            "image": {
                "media_type": "image/png",
                "data": base64::engine::general_purpose::STANDARD.encode(png),
            },
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }))
    }
}

/// Pull the generated text out of a response body.
pub fn extract_text(body: &Value) -> Option<String> {
    if let Some(s) = body.get("text").and_then(Value::as_str) {
        return Some(s.to_string());
    }
    if let Some(s) = body.get("completion").and_then(Value::as_str) {
        return Some(s.to_string());
    }
    match body.get("content") {
        Some(Value::String(s)) => return Some(s.clone()),
        Some(Value::Array(parts)) => {
            let text: String = parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect();
            if !text.is_empty() {
                return Some(text);
            }
        }
        _ => {}
    }
    body.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string)
}

impl SnippetClient for RemoteClient {
    fn name(&self) -> &str {
        &self.model
    }

    fn generate(&self, request: &SnippetRequest) -> Result<String, ClientError> {
        let body = self.request_body(request)?;
        info!(
            "POST {} model={} node={} crop={}x{} authorization=Bearer ***",
            self.endpoint,
            self.model,
            request.node_id,
            request.crop.width(),
            request.crop.height()
        );
        let resp = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        debug!("response node={} status={} body={}", request.node_id, status.as_u16(), text);
        if !status.is_success() {
            return Err(ClientError::HttpStatus { status: status.as_u16(), body: text });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| ClientError::BadResponse(e.to_string()))?;
        extract_text(&value).ok_or_else(|| ClientError::BadResponse("no text field in response".into()))
    }
}
