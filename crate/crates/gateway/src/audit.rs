//! Append-only JSONL audit log of outbound requests and their outcomes.
//!
//! Every attempt is written (and flushed) before it is dispatched. A
//! `result` entry carries the finished trace, which is what resume reads.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use rcf_core::chat::SampledTrace;

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestKey {
    /// What the request is for, e.g. `sample` or `eval:uniform(9)`.
    pub purpose: String,
    pub task_id: String,
    pub sample_index: u32,
}

impl RequestKey {
    pub fn new(purpose: impl Into<String>, task_id: impl Into<String>, sample_index: u32) -> Self {
        RequestKey {
            purpose: purpose.into(),
            task_id: task_id.into(),
            sample_index,
        }
    }

    /// Value of the `X-Sample-Key` header.
    pub fn header(&self) -> String {
        format!("{}#{}", self.task_id, self.sample_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEvent {
    Request,
    Response,
    Failure,
    Result,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub event: AuditEvent,
    #[serde(flatten)]
    pub key: RequestKey,
    pub attempt: u32,
    pub ts_ms: u128,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    /// Failed attempts before this entry.
    #[serde(default)]
    pub retries: u32,
    #[serde(default)]
    pub body: Value,
}

impl AuditEntry {
    pub fn new(event: AuditEvent, key: &RequestKey, attempt: u32, body: Value) -> Self {
        AuditEntry {
            event,
            key: key.clone(),
            attempt,
            ts_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            status: None,
            retries: attempt,
            body,
        }
    }

    pub fn with_status(mut self, status: u16) -> Self {
        self.status = Some(status);
        self
    }
}

/// All writers share one file handle behind a mutex.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(AuditLog { path, file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &AuditEntry) -> Result<(), GatewayError> {
        let mut line = serde_json::to_vec(entry).map_err(|e| GatewayError::Decode(e.to_string()))?;
        line.push(b'\n');
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(&line)?;
        file.flush()?;
        Ok(())
    }
}

pub fn read_audit(path: impl AsRef<Path>) -> Result<Vec<AuditEntry>, GatewayError> {
    let file = match File::open(path.as_ref()) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        // A crash can leave a torn final line.
        if let Ok(entry) = serde_json::from_str(&line) {
            out.push(entry);
        }
    }
    Ok(out)
}

/// Finished traces recorded in an audit log.
pub fn completed_traces(path: impl AsRef<Path>) -> Result<HashMap<RequestKey, SampledTrace>, GatewayError> {
    let mut done = HashMap::new();
    for entry in read_audit(path)? {
        if entry.event == AuditEvent::Result {
            if let Ok(trace) = serde_json::from_value::<SampledTrace>(entry.body) {
                done.insert(entry.key, trace);
            }
        }
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_results() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/audit.jsonl");
        let log = AuditLog::open(&path).unwrap();
        let key = RequestKey::new("sample", "q1", 2);
        log.append(&AuditEntry::new(AuditEvent::Request, &key, 0, serde_json::json!({"x": 1}))).unwrap();
        let trace = SampledTrace::from_completion("q1", 2, "<think>\na</think>b");
        log.append(&AuditEntry::new(AuditEvent::Result, &key, 1, serde_json::to_value(&trace).unwrap())).unwrap();
        std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"torn").unwrap();

        let entries = read_audit(&path).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].key, key);
        let done = completed_traces(&path).unwrap();
        assert_eq!(done[&key], trace);
        assert!(completed_traces(dir.path().join("missing")).unwrap().is_empty());
    }
}
