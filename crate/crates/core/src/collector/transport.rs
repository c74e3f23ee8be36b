use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde_json::{json, Value};

use super::{Clock, ModelConfig, TransportStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    pub temperature: f64,
    pub retrieval: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportReply {
    pub status: TransportStatus,
    pub text: String,
}

impl TransportReply {
    pub fn failed(status: TransportStatus) -> Self {
        Self {
            status,
            text: String::new(),
        }
    }
}

/// Sends one chat-completion request. Failures are reported through the
/// reply status rather than as errors.
pub trait ChatTransport: Send + Sync {
    fn send(&self, model: &ModelConfig, request: &ChatRequest) -> TransportReply;
}

/// OpenAI-compatible `chat/completions` over blocking HTTP.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn request_body(model: &ModelConfig, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": model.model_id,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "max_tokens": model.max_output_tokens,
        });
        if request.retrieval {
            if let (Some(obj), Some(extra)) =
                (body.as_object_mut(), model.retrieval_payload.as_object())
            {
                for (k, v) in extra {
                    obj.insert(k.clone(), v.clone());
                }
            }
        }
        body
    }
}

/// Pulls the assistant text out of a chat-completions response body.
pub(crate) fn completion_text(body: &Value) -> Option<&str> {
    let message = body.get("choices")?.get(0)?.get("message")?;
    match message.get("content")? {
        Value::String(s) => Some(s.as_str()),
        _ => None,
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, model: &ModelConfig, request: &ChatRequest) -> TransportReply {
        let mut builder = self
            .client
            .post(model.endpoint.clone())
            .timeout(Duration::from_secs_f64(model.request_timeout_secs))
            .json(&Self::request_body(model, request));
        if !model.api_key_ref.is_empty() {
            match std::env::var(&model.api_key_ref) {
                Ok(key) => builder = builder.bearer_auth(key),
                Err(_) => log::warn!(
                    "{}: environment variable {} is not set",
                    model.model_id,
                    model.api_key_ref
                ),
            }
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return TransportReply::failed(TransportStatus::Timeout),
            Err(e) => {
                log::warn!("{}: request failed: {e}", model.model_id);
                return TransportReply::failed(TransportStatus::HttpError { code: 0 });
            }
        };
        let status = response.status();
        let body = match response.text() {
            Ok(b) => b,
            Err(e) if e.is_timeout() => return TransportReply::failed(TransportStatus::Timeout),
            Err(_) => String::new(),
        };
        if !status.is_success() {
            return TransportReply {
                status: TransportStatus::HttpError {
                    code: status.as_u16(),
                },
                text: body,
            };
        }
        let text = serde_json::from_str::<Value>(&body)
            .ok()
            .and_then(|v| completion_text(&v).map(str::to_string))
            .unwrap_or_default();
        if text.trim().is_empty() {
            TransportReply::failed(TransportStatus::Empty)
        } else {
            TransportReply {
                status: TransportStatus::Ok,
                text,
            }
        }
    }
}

/// Per-endpoint minimum spacing between request starts.
pub struct RateLimiter {
    clock: Arc<dyn Clock>,
    next_slot: Mutex<HashMap<String, DateTime<Utc>>>,
}

impl RateLimiter {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            clock,
            next_slot: Mutex::new(HashMap::new()),
        }
    }

    /// Blocks until the endpoint's next free slot and reserves it.
    pub fn wait(&self, model: &ModelConfig) {
        if model.min_request_interval_ms == 0 {
            return;
        }
        let interval = chrono::Duration::milliseconds(model.min_request_interval_ms as i64);
        let slot = {
            let mut slots = self.next_slot.lock().expect("rate limiter poisoned");
            let now = self.clock.now();
            let entry = slots.entry(model.endpoint.to_string()).or_insert(now);
            let slot = (*entry).max(now);
            *entry = slot + interval;
            slot
        };
        self.clock.sleep_until(slot);
    }
}
