use std::sync::Arc;
use std::time::Duration;

use reqwest::StatusCode;
use tokio::sync::Semaphore;

use rcf_core::api::EndpointConfig;
use rcf_core::chat::{ChatRequest, PrefixMode, SampledTrace, Usage};

use crate::audit::{AuditEntry, AuditEvent, AuditLog, RequestKey};
use crate::config;
use crate::wire::{WireRequest, WireResponse};
use crate::GatewayError;

pub const SAMPLE_KEY_HEADER: &str = "x-sample-key";

const BODY_EXCERPT: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    /// Endpoint output with the forced prefix restored in front.
    pub text: String,
    pub finish_reason: Option<String>,
    pub usage: Usage,
    pub prefix_mode: PrefixMode,
    pub retries: u32,
}

/// A chat-completions client with bounded concurrency, retries and an
/// optional audit log. Clones share the concurrency pool.
#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    config: EndpointConfig,
    token: Option<String>,
    pool: Arc<Semaphore>,
    audit: Option<Arc<AuditLog>>,
}

enum Attempt {
    Retry(GatewayError),
    Fatal(GatewayError),
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, GatewayError> {
        config::validate(&config)?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let token = config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|t| !t.is_empty());
        let audit = match &config.audit_log {
            Some(path) => Some(Arc::new(AuditLog::open(path)?)),
            None => None,
        };
        Ok(ChatClient {
            http,
            pool: Arc::new(Semaphore::new(config.max_in_flight)),
            config,
            token,
            audit,
        })
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn audit(&self) -> Option<&Arc<AuditLog>> {
        self.audit.as_ref()
    }

    fn record(&self, entry: AuditEntry) -> Result<(), GatewayError> {
        match &self.audit {
            Some(log) => log.append(&entry),
            None => Ok(()),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        let ms = self.config.backoff_base_ms.saturating_mul(factor).min(self.config.backoff_max_ms);
        Duration::from_millis(ms)
    }

    pub async fn complete(&self, req: &ChatRequest, key: &RequestKey) -> Result<Completion, GatewayError> {
        req.validate().map_err(GatewayError::InvalidRequest)?;
        let (wire, prefix_mode) = WireRequest::from_chat(req, &self.config.model, self.config.supports_prefill);
        let body = serde_json::to_value(&wire).map_err(|e| GatewayError::Decode(e.to_string()))?;
        let _permit = self.pool.acquire().await.expect("pool is never closed");

        let mut attempt = 0;
        loop {
            self.record(AuditEntry::new(AuditEvent::Request, key, attempt, body.clone()))?;
            let err = match self.send_once(&body, key).await {
                Ok((status, resp)) => {
                    self.record(
                        AuditEntry::new(AuditEvent::Response, key, attempt, serde_json::to_value(&resp).unwrap_or_default())
                            .with_status(status),
                    )?;
                    let content = resp.content().unwrap_or_default();
                    let text = match req.forced_prefix.as_deref() {
                        Some(p) if !p.is_empty() && !content.trim_start().starts_with(p.trim_end()) => {
                            format!("{p}{content}")
                        }
                        _ => content.to_string(),
                    };
                    return Ok(Completion {
                        text,
                        finish_reason: resp.finish_reason().map(str::to_string),
                        usage: resp.usage,
                        prefix_mode,
                        retries: attempt,
                    });
                }
                Err(Attempt::Fatal(e)) => {
                    self.record_failure(key, attempt, &e)?;
                    return Err(e);
                }
                Err(Attempt::Retry(e)) => e,
            };
            self.record_failure(key, attempt, &err)?;
            if attempt >= self.config.max_retries {
                return Err(match err {
                    GatewayError::RateLimited { .. } => GatewayError::RateLimited { attempts: attempt + 1 },
                    GatewayError::Timeout { .. } => GatewayError::Timeout { attempts: attempt + 1 },
                    other => other,
                });
            }
            tracing::warn!(task = %key.task_id, sample = key.sample_index, attempt, error = %err, "retrying");
            tokio::time::sleep(self.backoff(attempt)).await;
            attempt += 1;
        }
    }

    fn record_failure(&self, key: &RequestKey, attempt: u32, err: &GatewayError) -> Result<(), GatewayError> {
        let mut entry = AuditEntry::new(
            AuditEvent::Failure,
            key,
            attempt,
            serde_json::json!({"kind": err.kind(), "error": err.to_string()}),
        );
        match err {
            GatewayError::Endpoint { status, .. } => entry = entry.with_status(*status),
            GatewayError::RateLimited { .. } => entry = entry.with_status(429),
            _ => {}
        }
        self.record(entry)
    }

    async fn send_once(&self, body: &serde_json::Value, key: &RequestKey) -> Result<(u16, WireResponse), Attempt> {
        let mut builder = self
            .http
            .post(self.config.completions_url())
            .header(SAMPLE_KEY_HEADER, key.header())
            .json(body);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let resp = match builder.send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Err(Attempt::Retry(GatewayError::Timeout { attempts: 1 })),
            Err(e) => return Err(Attempt::Retry(GatewayError::Transport(e.to_string()))),
        };
        let status = resp.status();
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Err(Attempt::Retry(GatewayError::Timeout { attempts: 1 })),
            Err(e) => return Err(Attempt::Retry(GatewayError::Transport(e.to_string()))),
        };
        if status.is_success() {
            return serde_json::from_str(&text)
                .map(|r| (status.as_u16(), r))
                .map_err(|e| Attempt::Fatal(GatewayError::Decode(e.to_string())));
        }
        let excerpt: String = text.chars().take(BODY_EXCERPT).collect();
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Attempt::Retry(GatewayError::RateLimited { attempts: 1 }));
        }
        let err = GatewayError::Endpoint { status: status.as_u16(), body: excerpt };
        if status.is_server_error() || status == StatusCode::REQUEST_TIMEOUT {
            Err(Attempt::Retry(err))
        } else {
            Err(Attempt::Fatal(err))
        }
    }

    /// One completion turned into a trace; the result is audited so a rerun
    /// can skip it.
    pub async fn sample(&self, req: &ChatRequest, key: &RequestKey) -> Result<SampledTrace, GatewayError> {
        let c = self.complete(req, key).await?;
        let mut trace = SampledTrace::from_completion(key.task_id.clone(), key.sample_index, c.text);
        trace.finish_reason = c.finish_reason;
        trace.usage = c.usage;
        trace.prefix_mode = c.prefix_mode;
        trace.retries = c.retries;
        self.record(AuditEntry::new(
            AuditEvent::Result,
            key,
            c.retries,
            serde_json::to_value(&trace).unwrap_or_default(),
        ))?;
        Ok(trace)
    }
}
