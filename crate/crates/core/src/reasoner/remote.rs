use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendConfig, PromptBundle, Reasoner, ReasonerError, ReasonerOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Moves one chat request over the wire and returns the assistant text.
pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, ReasonerError>;
}

/// Chat-completion client over plain HTTP.
pub struct HttpChatTransport {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatTransport {
    pub fn new(endpoint: String, api_key: Option<String>) -> Result<Self, ReasonerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ReasonerError::Transport(e.to_string()))?;
        Ok(HttpChatTransport {
            endpoint,
            api_key,
            client,
        })
    }
}

impl ChatTransport for HttpChatTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, ReasonerError> {
        let mut req = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ReasonerError::Transport(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp
            .json()
            .map_err(|e| ReasonerError::Transport(format!("unreadable response: {e}")))?;
        if !status.is_success() {
            return Err(ReasonerError::Transport(format!("HTTP {status}: {body}")));
        }
        assistant_text(&body)
            .map(str::to_string)
            .ok_or_else(|| ReasonerError::Transport("response carries no assistant text".into()))
    }
}

/// Accepts `choices[0].message.content`, `message.content`, or `content`.
fn assistant_text(body: &Value) -> Option<&str> {
    body.pointer("/choices/0/message/content")
        .or_else(|| body.pointer("/message/content"))
        .or_else(|| body.get("content"))
        .and_then(Value::as_str)
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().expect("in-flight lock");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("in-flight lock");
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("in-flight lock") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteReasoner {
    config: BackendConfig,
    transport: Arc<dyn ChatTransport>,
    in_flight: InFlight,
    id: String,
}

impl RemoteReasoner {
    pub fn new(config: BackendConfig, transport: Arc<dyn ChatTransport>) -> Self {
        let id = format!(
            "remote:{}",
            config.model_name.clone().unwrap_or_else(|| "default".into())
        );
        let cap = config.max_in_flight.max(1);
        RemoteReasoner {
            config,
            transport,
            in_flight: InFlight {
                count: Mutex::new(0),
                freed: Condvar::new(),
                cap,
            },
            id,
        }
    }

    fn initial_messages(&self, bundle: &PromptBundle) -> Vec<ChatMessage> {
        let mut user = bundle.instructions.clone();
        for (label, text) in &bundle.context_fragments {
            user.push_str(&format!("\n\n## {label}\n{text}"));
        }
        user.push_str(&format!(
            "\n\nReply with a single JSON value matching this schema:\n{}",
            json!(bundle.output_schema)
        ));
        vec![
            ChatMessage::new("system", bundle.role_preamble.clone()),
            ChatMessage::new("user", user),
        ]
    }
}

/// Pulls the JSON payload out of assistant text, tolerating code fences and
/// leading prose.
fn extract_json(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .map(str::trim);
    if let Some(inner) = unfenced {
        if let Ok(v) = serde_json::from_str(inner) {
            return Ok(v);
        }
    }
    if let Some(start) = trimmed.find(['{', '[']) {
        let mut de = serde_json::Deserializer::from_str(&trimmed[start..]).into_iter::<Value>();
        if let Some(Ok(v)) = de.next() {
            return Ok(v);
        }
    }
    Err("reply is not valid JSON".to_string())
}

impl Reasoner for RemoteReasoner {
    fn complete(&self, bundle: &PromptBundle) -> Result<ReasonerOutput, ReasonerError> {
        let _slot = self.in_flight.acquire();
        let mut messages = self.initial_messages(bundle);
        let max_attempts = self.config.retry_budget + 1;
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            let request = ChatRequest {
                model: self.config.model_name.clone().unwrap_or_default(),
                messages: messages.clone(),
                temperature: self.config.decoding.temperature,
                max_tokens: self.config.decoding.max_tokens,
            };
            let text = self.transport.send(&request)?;
            let verdict = extract_json(&text).and_then(|v| {
                bundle
                    .output_schema
                    .validate(&v)
                    .map(|_| v)
                    .map_err(|e| e.to_string())
            });
            match verdict {
                Ok(value) => {
                    return Ok(ReasonerOutput {
                        structured_value: value,
                        raw_text: text,
                        attempt_count: attempt,
                        backend_id: self.id.clone(),
                    })
                }
                Err(e) => {
                    tracing::debug!(attempt, error = %e, "reprompting after invalid output");
                    messages.push(ChatMessage::new("assistant", text));
                    messages.push(ChatMessage::new(
                        "user",
                        format!("Your previous reply was invalid ({e}). Reply again with only the JSON value."),
                    ));
                    last_error = e;
                }
            }
        }
        Err(ReasonerError::SchemaViolation {
            attempts: max_attempts,
            message: last_error,
        })
    }

    fn backend_id(&self) -> &str {
        &self.id
    }
}
