//! Talking to OpenAI-compatible chat endpoints: sampling traces, annotating
//! them, running benchmarks, plus a scriptable mock endpoint for tests.

pub mod annotate;
pub mod audit;
pub mod client;
pub mod config;
pub mod mock;
pub mod runner;
pub mod sample;
pub mod wire;

use std::path::PathBuf;

use thiserror::Error;

use rcf_core::harness::HarnessError;

pub use client::{ChatClient, Completion};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint returned {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("could not decode response: {0}")]
    Decode(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("annotation could not be parsed after {} replies: {error}", replies.len())]
    AnnotationParseFailure { replies: Vec<String>, error: String },
    #[error("run directory {0} is locked by another run")]
    RunLocked(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl GatewayError {
    /// Short machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Endpoint { .. } => "endpoint_error",
            GatewayError::RateLimited { .. } => "rate_limited",
            GatewayError::Timeout { .. } => "timeout",
            GatewayError::Transport(_) => "transport",
            GatewayError::Decode(_) => "decode",
            GatewayError::Config(_) => "config",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::AnnotationParseFailure { .. } => "annotation_parse_failure",
            GatewayError::RunLocked(_) => "run_locked",
            GatewayError::Io(_) => "io",
            GatewayError::Harness(_) => "invalid_input",
        }
    }
}
