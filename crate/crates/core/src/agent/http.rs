//! HTTP chat-completions client with function calling, compatible with the
//! dominant public tool-calling wire schema. Endpoint and credentials come
//! from the environment; transport errors are retried with exponential
//! backoff before the session gives up.

use std::time::Duration;

use serde_json::{json, Value};

use super::client::{ClientError, LlmClient, Sampling};
use super::{ChatMessage, Role, ToolCall, ToolSpec};

pub const ENV_API_BASE: &str = "SPICEDECK_API_BASE";
pub const ENV_API_KEY: &str = "SPICEDECK_API_KEY";
pub const ENV_MODEL: &str = "SPICEDECK_MODEL";

pub struct HttpClient {
    base_url: String,
    api_key: Option<String>,
    model: String,
    http: reqwest::blocking::Client,
    max_attempts: u32,
    initial_backoff: Duration,
}

impl HttpClient {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str) -> HttpClient {
        HttpClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
            http: reqwest::blocking::Client::new(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(200),
        }
    }

    /// Read endpoint configuration from `SPICEDECK_API_BASE`,
    /// `SPICEDECK_API_KEY` and `SPICEDECK_MODEL`.
    pub fn from_env() -> Result<HttpClient, ClientError> {
        let base = std::env::var(ENV_API_BASE)
            .map_err(|_| ClientError::Transport(format!("{ENV_API_BASE} is not set")))?;
        let model = std::env::var(ENV_MODEL)
            .map_err(|_| ClientError::Transport(format!("{ENV_MODEL} is not set")))?;
        let key = std::env::var(ENV_API_KEY).ok();
        Ok(HttpClient::new(&base, key, &model))
    }

    pub fn with_backoff(mut self, max_attempts: u32, initial: Duration) -> HttpClient {
        self.max_attempts = max_attempts.max(1);
        self.initial_backoff = initial;
        self
    }

    fn wire_message(message: &ChatMessage) -> Value {
        let role = match message.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        };
        let mut obj = json!({ "role": role, "content": message.content });
        if !message.tool_calls.is_empty() {
            obj["tool_calls"] = Value::Array(
                message
                    .tool_calls
                    .iter()
                    .map(|call| {
                        json!({
                            "id": call.id,
                            "type": "function",
                            "function": {
                                "name": call.name,
                                "arguments": call.arguments.to_string(),
                            }
                        })
                    })
                    .collect(),
            );
        }
        if let Some(id) = &message.tool_call_id {
            obj["tool_call_id"] = json!(id);
        }
        obj
    }

    fn parse_response(body: &Value) -> Result<ChatMessage, ClientError> {
        let message = body
            .pointer("/choices/0/message")
            .ok_or_else(|| ClientError::Protocol("response lacks choices[0].message".into()))?;
        let content = message
            .get("content")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        let mut tool_calls = Vec::new();
        if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
            for call in calls {
                let id = call
                    .get("id")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string();
                let function = call
                    .get("function")
                    .ok_or_else(|| ClientError::Protocol("tool call lacks function".into()))?;
                let name = function
                    .get("name")
                    .and_then(Value::as_str)
                    .ok_or_else(|| ClientError::Protocol("tool call lacks name".into()))?
                    .to_string();
                let arguments = match function.get("arguments") {
                    Some(Value::String(text)) => {
                        serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.clone()))
                    }
                    Some(other) => other.clone(),
                    None => Value::Null,
                };
                tool_calls.push(ToolCall {
                    id,
                    name,
                    arguments,
                });
            }
        }
        Ok(ChatMessage {
            role: Role::Assistant,
            content,
            tool_calls,
            tool_call_id: None,
        })
    }
}

impl LlmClient for HttpClient {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        sampling: &Sampling,
    ) -> Result<ChatMessage, ClientError> {
        let mut payload = json!({
            "model": self.model,
            "messages": messages.iter().map(Self::wire_message).collect::<Vec<_>>(),
            "temperature": sampling.temperature,
            "top_p": sampling.top_p,
        });
        if !tools.is_empty() {
            payload["tools"] = Value::Array(tools.iter().map(ToolSpec::to_wire).collect());
        }
        let url = format!("{}/chat/completions", self.base_url);

        let mut backoff = self.initial_backoff;
        let mut last_error = None;
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            let mut request = self.http.post(&url).json(&payload);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let body: Value = response.json().map_err(|e| {
                            ClientError::Protocol(format!("bad response body: {e}"))
                        })?;
                        return Self::parse_response(&body);
                    }
                    // Retry server-side congestion; 4xx (other than 429)
                    // will not improve on its own.
                    let retryable = status.is_server_error() || status.as_u16() == 429;
                    let text = response.text().unwrap_or_default();
                    let err = ClientError::Transport(format!("HTTP {status}: {text}"));
                    if !retryable {
                        return Err(err);
                    }
                    last_error = Some(err);
                }
                Err(e) => last_error = Some(ClientError::Transport(e.to_string())),
            }
        }
        Err(last_error.unwrap_or_else(|| ClientError::Transport("unknown failure".into())))
    }
}
