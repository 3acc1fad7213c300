//! A scripted stand-in for an OpenAI-compatible endpoint.
//!
//! A script is a JSON document of rules. The first rule whose matcher fits a
//! request answers it; each rule walks through its replies in order and
//! keeps repeating the last one.
//!
//! ```json
//! {
//!   "require_token": "secret",
//!   "rules": [
//!     {"when": {"contains": "Problem 1", "sample_index": 0},
//!      "replies": [{"status": 429}, {"content": "<think>\nok</think>\\boxed{2}"}]}
//!   ],
//!   "fallback": [{"content": "I am not sure."}]
//! }
//! ```

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::task::JoinHandle;

use crate::client::SAMPLE_KEY_HEADER;
use crate::wire::WireRequest;
use crate::GatewayError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Matcher {
    /// Substring of any message content.
    pub contains: Option<String>,
    pub not_contains: Option<String>,
    /// Task id part of the sample key header.
    pub task_id: Option<String>,
    pub sample_index: Option<u32>,
    pub model: Option<String>,
}

impl Matcher {
    fn matches(&self, req: &WireRequest, sample_key: Option<&str>) -> bool {
        let text = req.text();
        let (task, index) = match sample_key.and_then(|k| k.rsplit_once('#')) {
            Some((t, i)) => (Some(t), i.parse::<u32>().ok()),
            None => (None, None),
        };
        self.contains.as_ref().is_none_or(|c| text.contains(c.as_str()))
            && self.not_contains.as_ref().is_none_or(|c| !text.contains(c.as_str()))
            && self.task_id.as_ref().is_none_or(|t| task == Some(t.as_str()))
            && self.sample_index.is_none_or(|i| index == Some(i))
            && self.model.as_ref().is_none_or(|m| &req.model == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockReply {
    #[serde(default = "ok_status")]
    pub status: u16,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default)]
    pub finish_reason: Option<String>,
    /// Raw response body, sent as-is instead of a completion.
    #[serde(default)]
    pub body: Option<Value>,
    #[serde(default)]
    pub delay_ms: Option<u64>,
}

fn ok_status() -> u16 {
    200
}

impl MockReply {
    pub fn content(text: impl Into<String>) -> Self {
        MockReply {
            status: 200,
            content: Some(text.into()),
            finish_reason: None,
            body: None,
            delay_ms: None,
        }
    }

    pub fn status(status: u16) -> Self {
        MockReply {
            status,
            content: None,
            finish_reason: None,
            body: None,
            delay_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub when: Matcher,
    pub replies: Vec<MockReply>,
}

impl MockRule {
    pub fn new(when: Matcher, replies: Vec<MockReply>) -> Self {
        MockRule { when, replies }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    /// Used when no rule matches; without it such requests get a 404.
    pub fallback: Vec<MockReply>,
    /// Bearer token every request must carry.
    pub require_token: Option<String>,
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        serde_json::from_str(text).map_err(|e| GatewayError::Config(format!("mock script: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// One request as the mock saw it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRequest {
    pub sample_key: Option<String>,
    pub authorization: Option<String>,
    pub body: Value,
    pub status: u16,
}

impl LoggedRequest {
    pub fn temperature(&self) -> Option<f64> {
        self.body.get("temperature").and_then(Value::as_f64)
    }

    pub fn user_content(&self) -> Option<String> {
        let req: WireRequest = serde_json::from_value(self.body.clone()).ok()?;
        req.messages
            .iter()
            .rev()
            .find(|m| m.role == rcf_core::chat::Role::User)
            .map(|m| m.content.clone())
    }
}

#[derive(Debug)]
struct MockState {
    script: MockScript,
    /// Replies served so far per rule; the last slot is the fallback.
    cursors: Mutex<Vec<usize>>,
    log: Mutex<Vec<LoggedRequest>>,
}

impl MockState {
    fn next_reply(&self, req: &WireRequest, sample_key: Option<&str>) -> Option<MockReply> {
        let rules = &self.script.rules;
        let slot = rules
            .iter()
            .position(|r| r.when.matches(req, sample_key))
            .unwrap_or(rules.len());
        let replies = rules.get(slot).map_or(&self.script.fallback, |r| &r.replies);
        if replies.is_empty() {
            return None;
        }
        let mut cursors = self.cursors.lock().unwrap_or_else(|p| p.into_inner());
        let i = cursors[slot];
        cursors[slot] += 1;
        Some(replies[i.min(replies.len() - 1)].clone())
    }
}

pub fn mock_router(script: MockScript) -> (Router, MockHandle) {
    let state = Arc::new(MockState {
        cursors: Mutex::new(vec![0; script.rules.len() + 1]),
        script,
        log: Mutex::new(Vec::new()),
    });
    let router = Router::new()
        .route("/v1/chat/completions", post(completions))
        .route("/chat/completions", post(completions))
        .route("/_mock/requests", get(requests))
        .with_state(state.clone());
    (router, MockHandle(state))
}

/// Read access to a running mock's request log.
#[derive(Debug, Clone)]
pub struct MockHandle(Arc<MockState>);

impl MockHandle {
    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.0.log.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

async fn completions(State(state): State<Arc<MockState>>, headers: HeaderMap, body: String) -> Response {
    let header = |name: &str| headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
    let sample_key = header(SAMPLE_KEY_HEADER);
    let authorization = header("authorization");
    let raw: Value = serde_json::from_str(&body).unwrap_or(Value::Null);

    let (status, payload, delay) = 'reply: {
        if let Some(token) = &state.script.require_token {
            if authorization.as_deref() != Some(format!("Bearer {token}").as_str()) {
                break 'reply (401, json!({"error": {"message": "missing or wrong bearer token"}}), None);
            }
        }
        let req: WireRequest = match serde_json::from_value(raw.clone()) {
            Ok(r) => r,
            Err(e) => break 'reply (400, json!({"error": {"message": e.to_string()}}), None),
        };
        let Some(reply) = state.next_reply(&req, sample_key.as_deref()) else {
            break 'reply (404, json!({"error": {"message": "no mock rule matched"}}), None);
        };
        let payload = if let Some(b) = reply.body {
            b
        } else if reply.status == 200 {
            let content = reply.content.unwrap_or_default();
            let prompt_tokens = word_count(&req.text());
            let completion_tokens = word_count(&content);
            json!({
                "id": "mock",
                "object": "chat.completion",
                "model": req.model,
                "choices": [{
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": reply.finish_reason.unwrap_or_else(|| "stop".into()),
                }],
                "usage": {
                    "prompt_tokens": prompt_tokens,
                    "completion_tokens": completion_tokens,
                    "total_tokens": prompt_tokens + completion_tokens,
                },
            })
        } else {
            json!({"error": {"message": format!("scripted status {}", reply.status)}})
        };
        (reply.status, payload, reply.delay_ms)
    };

    state.log.lock().unwrap_or_else(|p| p.into_inner()).push(LoggedRequest {
        sample_key,
        authorization,
        body: raw,
        status,
    });
    if let Some(ms) = delay {
        tokio::time::sleep(Duration::from_millis(ms)).await;
    }
    let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (code, Json(payload)).into_response()
}

async fn requests(State(state): State<Arc<MockState>>) -> Json<Vec<LoggedRequest>> {
    Json(state.log.lock().unwrap_or_else(|p| p.into_inner()).clone())
}

/// A mock bound to a local port, stopped on drop.
#[derive(Debug)]
pub struct MockServer {
    addr: SocketAddr,
    handle: MockHandle,
    task: JoinHandle<()>,
}

impl MockServer {
    pub async fn start(script: MockScript) -> Result<Self, GatewayError> {
        Self::bind(script, "127.0.0.1:0").await
    }

    pub async fn bind(script: MockScript, addr: &str) -> Result<Self, GatewayError> {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let (router, handle) = mock_router(script);
        let task = tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, router).await {
                tracing::error!(error = %e, "mock server stopped");
            }
        });
        Ok(MockServer { addr, handle, task })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.handle.requests()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}
