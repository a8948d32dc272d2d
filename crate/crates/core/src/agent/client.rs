//! LLM client abstraction: a live endpoint or a deterministic scripted
//! playback used by every offline test.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatMessage, Role, ToolCall, ToolSpec};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("scripted client exhausted after {turns} turns")]
    ScriptExhausted { turns: usize },
}

/// Sampling parameters forwarded to the endpoint.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
}

/// One assistant turn per call. Implementations must return a message with
/// the assistant role; tool results arrive through `messages` on the next
/// call.
pub trait LlmClient {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        sampling: &Sampling,
    ) -> Result<ChatMessage, ClientError>;
}

/// Scripted client file format: an ordered list of canned assistant turns,
/// consumed one per LLM turn.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Script {
    pub turns: Vec<ScriptTurn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptTurn {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptCall>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptCall {
    pub name: String,
    #[serde(default)]
    pub arguments: serde_json::Value,
}

pub struct ScriptedClient {
    turns: VecDeque<ScriptTurn>,
    consumed: usize,
    next_call_id: usize,
}

impl ScriptedClient {
    pub fn new(script: Script) -> ScriptedClient {
        ScriptedClient {
            turns: script.turns.into(),
            consumed: 0,
            next_call_id: 0,
        }
    }

    pub fn from_path(path: &Path) -> Result<ScriptedClient, ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Transport(format!("{}: {e}", path.display())))?;
        let script: Script = serde_json::from_str(&text)
            .map_err(|e| ClientError::Protocol(format!("bad script file: {e}")))?;
        Ok(ScriptedClient::new(script))
    }
}

impl LlmClient for ScriptedClient {
    fn complete(
        &mut self,
        _messages: &[ChatMessage],
        _tools: &[ToolSpec],
        _sampling: &Sampling,
    ) -> Result<ChatMessage, ClientError> {
        let turn = self.turns.pop_front().ok_or(ClientError::ScriptExhausted {
            turns: self.consumed,
        })?;
        self.consumed += 1;
        let tool_calls = turn
            .tool_calls
            .into_iter()
            .map(|call| {
                self.next_call_id += 1;
                ToolCall {
                    id: format!("call-{}", self.next_call_id),
                    name: call.name,
                    arguments: call.arguments,
                }
            })
            .collect();
        Ok(ChatMessage {
            role: Role::Assistant,
            content: turn.content,
            tool_calls,
            tool_call_id: None,
        })
    }
}

/// Client that answers with a single fixed turn; used by the no-op and
/// oracle benchmark agents.
pub struct OneShotClient {
    content: Option<String>,
}

impl OneShotClient {
    pub fn new(content: String) -> OneShotClient {
        OneShotClient {
            content: Some(content),
        }
    }
}

impl LlmClient for OneShotClient {
    fn complete(
        &mut self,
        _messages: &[ChatMessage],
        _tools: &[ToolSpec],
        _sampling: &Sampling,
    ) -> Result<ChatMessage, ClientError> {
        match self.content.take() {
            Some(content) => Ok(ChatMessage {
                role: Role::Assistant,
                content,
                tool_calls: Vec::new(),
                tool_call_id: None,
            }),
            None => Err(ClientError::ScriptExhausted { turns: 1 }),
        }
    }
}
