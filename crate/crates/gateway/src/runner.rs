//! Benchmark runs and ablations against a live endpoint.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::future::join_all;

use rcf_core::chat::SampledTrace;
use rcf_core::grading::{BoxedAnswerGrader, Grader};
use rcf_core::harness::{
    build_prompt, validate_benchmark, AblationCondition, BenchmarkItem, ConditionReport, HarnessError, ItemResult,
    RunReport, SampleOutcome, SamplingParams, StatsOptions, PROMPT_LAYOUT,
};

use crate::audit::{completed_traces, AuditLog, RequestKey};
use crate::{ChatClient, GatewayError};

pub const AUDIT_FILE: &str = "audit.jsonl";
pub const REPORT_FILE: &str = "report.json";
const LOCK_FILE: &str = "run.lock";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub benchmark: String,
    pub sampling: SamplingParams,
    pub exclude_failed: bool,
    pub stats: StatsOptions,
    /// Holds the audit log and final report; a rerun skips finished samples.
    pub run_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(benchmark: impl Into<String>, sampling: SamplingParams) -> Self {
        RunOptions {
            benchmark: benchmark.into(),
            sampling,
            exclude_failed: false,
            stats: StatsOptions::default(),
            run_dir: None,
        }
    }
}

/// Held for the duration of a run; removed on drop.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self, GatewayError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(GatewayError::RunLocked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

pub fn eval_purpose(condition: &AblationCondition) -> String {
    format!("eval:{condition}")
}

pub async fn run_benchmark(
    client: &ChatClient,
    items: &[BenchmarkItem],
    condition: AblationCondition,
    options: &RunOptions,
) -> Result<RunReport, GatewayError> {
    run_conditions(client, items, &[condition], options).await
}

/// Every condition sees the same items and the same per-sample seeds.
pub async fn run_ablation(
    client: &ChatClient,
    items: &[BenchmarkItem],
    conditions: &[AblationCondition],
    options: &RunOptions,
) -> Result<RunReport, GatewayError> {
    if conditions.len() < 2 {
        return Err(HarnessError::TooFewConditions.into());
    }
    run_conditions(client, items, conditions, options).await
}

pub async fn run_conditions(
    client: &ChatClient,
    items: &[BenchmarkItem],
    conditions: &[AblationCondition],
    options: &RunOptions,
) -> Result<RunReport, GatewayError> {
    validate_benchmark(items)?;
    options.sampling.validate()?;
    if conditions.is_empty() {
        return Err(GatewayError::InvalidRequest("no conditions".into()));
    }

    let _lock = options.run_dir.as_deref().map(RunLock::acquire).transpose()?;
    let (client, done) = match &options.run_dir {
        Some(dir) => {
            let path = dir.join(AUDIT_FILE);
            let done = completed_traces(&path)?;
            (client.clone().with_audit(Arc::new(AuditLog::open(&path)?)), done)
        }
        None => (client.clone(), HashMap::new()),
    };
    if !done.is_empty() {
        tracing::info!(finished = done.len(), "resuming run");
    }

    let sampling = options.sampling;
    let client = &client;
    let done = &done;
    let mut jobs = Vec::new();
    for condition in conditions {
        let purpose = eval_purpose(condition);
        for item in items {
            let mut req = build_prompt(item, condition);
            req.temperature = sampling.temperature;
            req.max_tokens = sampling.max_tokens;
            for i in 0..sampling.n {
                let mut req = req.clone();
                req.seed = sampling.seed.map(|s| s.wrapping_add(u64::from(i)));
                let key = RequestKey::new(purpose.clone(), item.id.clone(), i);
                jobs.push(async move {
                    match done.get(&key) {
                        Some(trace) => Ok::<SampledTrace, GatewayError>(trace.clone()),
                        None => client.sample(&req, &key).await,
                    }
                });
            }
        }
    }
    let mut results = join_all(jobs).await.into_iter();

    let grader = BoxedAnswerGrader;
    let mut reports = Vec::with_capacity(conditions.len());
    for condition in conditions {
        let mut item_results = Vec::with_capacity(items.len());
        for item in items {
            let samples = (0..sampling.n)
                .map(|i| match results.next().expect("one result per job") {
                    Ok(trace) => {
                        let g = grader.grade(&trace.completion, &item.answer);
                        SampleOutcome::graded(trace, g)
                    }
                    Err(e) => {
                        tracing::warn!(item = %item.id, sample = i, error = %e, "sample failed");
                        SampleOutcome::failed(i, e.to_string())
                    }
                })
                .collect();
            item_results.push(ItemResult::assemble(item, samples, sampling.k));
        }
        reports.push(ConditionReport::assemble(*condition, item_results, options.exclude_failed, &options.stats));
    }

    let report = RunReport {
        benchmark: options.benchmark.clone(),
        model: client.config().model.clone(),
        sampling,
        prompt_layout: PROMPT_LAYOUT.to_string(),
        exclude_failed: options.exclude_failed,
        conditions: reports,
    };
    if let Some(dir) = &options.run_dir {
        let text = serde_json::to_string_pretty(&report).map_err(|e| GatewayError::Decode(e.to_string()))?;
        std::fs::write(dir.join(REPORT_FILE), text)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(RunLock::acquire(dir.path()), Err(GatewayError::RunLocked(_))));
        drop(a);
        assert!(RunLock::acquire(dir.path()).is_ok());
    }
}
