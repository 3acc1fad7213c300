//! OpenAI-compatible chat-completions wire format.

use serde::{Deserialize, Serialize};

use rcf_core::chat::{ChatMessage, ChatRequest, PrefixMode, Role, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl WireRequest {
    /// Places the forced prefix as a trailing assistant turn when the
    /// endpoint continues one, otherwise appends it to the last user turn.
    pub fn from_chat(req: &ChatRequest, model: &str, supports_prefill: bool) -> (Self, PrefixMode) {
        let mut messages = req.messages.clone();
        let mut mode = PrefixMode::None;
        if let Some(prefix) = req.forced_prefix.as_deref().filter(|p| !p.is_empty()) {
            if supports_prefill {
                messages.push(ChatMessage::assistant(prefix));
                mode = PrefixMode::AssistantPrefill;
            } else if let Some(last) = messages.iter_mut().rev().find(|m| m.role == Role::User) {
                last.content.push('\n');
                last.content.push_str(prefix);
                mode = PrefixMode::AppendedToUser;
            }
        }
        let model = if req.model.is_empty() { model } else { &req.model };
        (
            WireRequest {
                model: model.to_string(),
                messages,
                temperature: req.temperature,
                max_tokens: req.max_tokens,
                seed: req.seed,
            },
            mode,
        )
    }

    /// All message contents, newline-joined.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireChoice {
    #[serde(default)]
    pub index: u32,
    pub message: WireMessage,
    #[serde(default)]
    pub finish_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(default = "assistant")]
    pub role: Role,
    #[serde(default)]
    pub content: Option<String>,
}

fn assistant() -> Role {
    Role::Assistant
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub model: String,
    pub choices: Vec<WireChoice>,
    #[serde(default)]
    pub usage: Usage,
}

impl WireResponse {
    pub fn content(&self) -> Option<&str> {
        self.choices.first().and_then(|c| c.message.content.as_deref())
    }

    pub fn finish_reason(&self) -> Option<&str> {
        self.choices.first().and_then(|c| c.finish_reason.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rcf_core::chat::THINK_PREFIX;

    fn req() -> ChatRequest {
        let mut r = ChatRequest::new(vec![ChatMessage::system(""), ChatMessage::user("q")]);
        r.forced_prefix = Some(THINK_PREFIX.into());
        r
    }

    #[test]
    fn prefill_adds_assistant_turn() {
        let (w, mode) = WireRequest::from_chat(&req(), "m", true);
        assert_eq!(mode, PrefixMode::AssistantPrefill);
        assert_eq!(w.messages.last().unwrap(), &ChatMessage::assistant("<think>\n"));
        assert_eq!(w.model, "m");
    }

    #[test]
    fn fallback_appends_to_user() {
        let (w, mode) = WireRequest::from_chat(&req(), "m", false);
        assert_eq!(mode, PrefixMode::AppendedToUser);
        assert_eq!(w.messages.len(), 2);
        assert_eq!(w.messages[1].content, "q\n<think>\n");
    }

    #[test]
    fn response_parses_minimal_body() {
        let r: WireResponse = serde_json::from_str(
            r#"{"choices":[{"message":{"content":"hi"},"finish_reason":"stop"}]}"#,
        )
        .unwrap();
        assert_eq!(r.content(), Some("hi"));
        assert_eq!(r.finish_reason(), Some("stop"));
    }
}
