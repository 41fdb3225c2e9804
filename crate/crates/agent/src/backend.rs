//! Chat backends: an OpenAI-compatible HTTP client and a scripted replayer
//! for tests and offline runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{AgentError, AgentResult};

pub const ENV_BASE_URL: &str = "LODESTAR_BACKEND_URL";
pub const ENV_API_KEY: &str = "LODESTAR_API_KEY";
pub const ENV_MODEL: &str = "LODESTAR_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Hex SHA-256 of the canonical JSON form; the scripted backend's key.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("request serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub structured_output: bool,
    pub model: String,
}

pub trait ChatBackend: Send + Sync {
    fn capabilities(&self) -> Capabilities;
    fn complete(&self, request: &ChatRequest) -> AgentResult<String>;
}

/// OpenAI-compatible chat-completions client.
#[derive(Debug, Clone)]
pub struct OpenAiBackend {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl OpenAiBackend {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        OpenAiBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
            timeout,
        }
    }

    /// Reads the base URL, key and model from the environment; `base_url`
    /// overrides the variable when given.
    pub fn from_env(base_url: Option<&str>, timeout: Duration) -> AgentResult<Self> {
        let url = match base_url {
            Some(u) => u.to_string(),
            None => std::env::var(ENV_BASE_URL)
                .map_err(|_| AgentError::Backend(format!("{ENV_BASE_URL} not set")))?,
        };
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".to_string());
        Ok(Self::new(&url, &model, std::env::var(ENV_API_KEY).ok(), timeout))
    }
}

impl ChatBackend for OpenAiBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            structured_output: false,
            model: self.model.clone(),
        }
    }

    fn complete(&self, request: &ChatRequest) -> AgentResult<String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        let mut call = agent.post(&format!("{}/chat/completions", self.base_url));
        if let Some(key) = &self.api_key {
            call = call.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(&body)
            .map_err(|e| AgentError::Backend(format!("chat request failed: {e}")))?;
        let reply: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| AgentError::Backend(format!("chat reply unreadable: {e}")))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| AgentError::Backend("chat reply has no message content".into()))
    }
}

/// Canned responses. A request whose hash appears in `by_hash` gets that
/// response; anything else takes the next entry of `sequence`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default)]
    pub by_hash: BTreeMap<String, String>,
    #[serde(default)]
    pub sequence: Vec<String>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    transcript: Transcript,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(transcript: Transcript) -> Self {
        ScriptedBackend {
            transcript,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_sequence<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(Transcript {
            by_hash: BTreeMap::new(),
            sequence: responses.into_iter().map(Into::into).collect(),
        })
    }

    pub fn from_path(path: &Path) -> AgentResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))?;
        let transcript = serde_json::from_str(&text)
            .map_err(|e| AgentError::Parse(format!("transcript {}: {e}", path.display())))?;
        Ok(Self::new(transcript))
    }

    /// Sequence entries consumed so far.
    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("cursor lock")
    }
}

impl ChatBackend for ScriptedBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            structured_output: true,
            model: "scripted".to_string(),
        }
    }

    fn complete(&self, request: &ChatRequest) -> AgentResult<String> {
        if let Some(reply) = self.transcript.by_hash.get(&request.hash()) {
            return Ok(reply.clone());
        }
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let reply = self
            .transcript
            .sequence
            .get(*cursor)
            .cloned()
            .ok_or_else(|| AgentError::Backend(format!("transcript exhausted after {} replies", *cursor)))?;
        *cursor += 1;
        Ok(reply)
    }
}
