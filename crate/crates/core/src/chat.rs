//! Chat-completion request/response data shared by the gateway, the
//! evaluation harness and the dataset builder.

use serde::{Deserialize, Serialize};

/// Assistant prefix that forces a reasoning span before the answer.
pub const THINK_PREFIX: &str = "<think>\n";
pub const THINK_CLOSE: &str = "</think>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// A request before it is put on the wire. `forced_prefix` is delivered
/// either as a pre-filled assistant turn or appended to the last user turn,
/// depending on what the endpoint supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Empty means "use the endpoint's configured model".
    #[serde(default)]
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model: String::new(),
            messages,
            temperature: 0.0,
            max_tokens: None,
            forced_prefix: None,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.messages.is_empty() {
            return Err("request has no messages".into());
        }
        Ok(())
    }

    /// Content of the last user message.
    pub fn user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

/// How the forced prefix reached the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixMode {
    AssistantPrefill,
    AppendedToUser,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

/// One sampled completion for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledTrace {
    pub query_id: String,
    pub sample_index: u32,
    /// Text returned by the endpoint.
    pub completion: String,
    pub think: String,
    pub answer: String,
    #[serde(default)]
    pub finish_reason: Option<String>,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub prefix_mode: PrefixMode,
    /// Failed attempts before this completion was obtained.
    #[serde(default)]
    pub retries: u32,
}

impl SampledTrace {
    pub fn from_completion(
        query_id: impl Into<String>,
        sample_index: u32,
        completion: impl Into<String>,
    ) -> Self {
        let completion = completion.into();
        let (think, answer) = split_think(&completion);
        SampledTrace {
            query_id: query_id.into(),
            sample_index,
            completion,
            think,
            answer,
            finish_reason: None,
            usage: Usage::default(),
            prefix_mode: PrefixMode::None,
            retries: 0,
        }
    }
}

/// Splits a completion into its reasoning span and what follows it.
///
/// A leading `<think>` (echoed prefix) is dropped. Without a `</think>` the
/// whole completion is the reasoning span and the answer segment is empty.
pub fn split_think(completion: &str) -> (String, String) {
    let body = completion
        .strip_prefix(THINK_PREFIX)
        .or_else(|| completion.strip_prefix("<think>"))
        .unwrap_or(completion);
    match body.split_once(THINK_CLOSE) {
        Some((think, answer)) => (think.to_string(), answer.to_string()),
        None => (body.to_string(), String::new()),
    }
}
