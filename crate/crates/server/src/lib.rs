//! HTTP/JSON front end over the core library and the endpoint gateway.
//!
//! Every route takes and returns JSON. Failures come back as
//! `{"kind": ..., "error": ...}` with a 4xx or 5xx status.

use std::collections::HashMap;
use std::path::PathBuf;

use axum::extract::rejection::JsonRejection;
use axum::extract::FromRequest;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;

use rcf_core::api::{
    AnnotateRequest, ApiError, BuildRequest, CalculusSynthRequest, EvalRequest, GradeRequest, PassAtKResponse,
    RecordsBody, ReportRequest, ReportResponse, SampleError, SampleRequest, SampleResponse, SearchSynthRequest,
    SimRecord, SimRunRequest, SplitRequest, StatsRequest, SweepRequest,
};
use rcf_core::dataset::{build_records, split_dataset, summarize, DatasetError, DatasetSplit, DatasetSummary};
use rcf_core::grading::{grade, pass_at_k, BoxedAnswerGrader, GradeResult, GradingError, PassKInput};
use rcf_core::harness::{trace_stats, HarnessError, RunReport, TraceStats};
use rcf_core::jsonl::JsonlError;
use rcf_core::rcf::AnnotationRecord;
use rcf_core::report::render_any;
use rcf_core::sim::{standard_sweeps, SimError, SweepTable};
use rcf_core::synth::{gen_calculus, gen_search_tasks, CalculusKind, SynthError, TaskRecord};
use rcf_gateway::annotate::annotate_trace;
use rcf_gateway::config::validate;
use rcf_gateway::runner::{run_ablation, run_benchmark, RunOptions};
use rcf_gateway::sample::{filter_correct, sample_batch};
use rcf_gateway::{ChatClient, GatewayError};

/// Error returned by a handler.
#[derive(Debug)]
pub struct AppError {
    pub status: StatusCode,
    pub kind: String,
    pub message: String,
}

impl AppError {
    pub fn new(status: StatusCode, kind: impl Into<String>, message: impl ToString) -> Self {
        AppError { status, kind: kind.into(), message: message.to_string() }
    }

    fn invalid(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_input", message)
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let body = ApiError { kind: self.kind, error: self.message };
        (self.status, axum::Json(body)).into_response()
    }
}

impl From<JsonRejection> for AppError {
    fn from(e: JsonRejection) -> Self {
        Self::new(e.status(), "bad_json", e.body_text())
    }
}

impl From<HarnessError> for AppError {
    fn from(e: HarnessError) -> Self {
        Self::invalid(e)
    }
}

impl From<GradingError> for AppError {
    fn from(e: GradingError) -> Self {
        Self::invalid(e)
    }
}

impl From<SynthError> for AppError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::UnsupportedKind(_) => Self::new(StatusCode::BAD_REQUEST, "unsupported_kind", e),
            _ => Self::invalid(e),
        }
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        Self::invalid(e)
    }
}

impl From<JsonlError> for AppError {
    fn from(e: JsonlError) -> Self {
        Self::invalid(e)
    }
}

impl From<DatasetError> for AppError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::ConflictWithoutControl { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "conflict_without_control", e)
            }
            _ => Self::invalid(e),
        }
    }
}

impl From<GatewayError> for AppError {
    fn from(e: GatewayError) -> Self {
        let status = match &e {
            GatewayError::Config(_) | GatewayError::InvalidRequest(_) | GatewayError::Harness(_) => {
                StatusCode::BAD_REQUEST
            }
            GatewayError::RunLocked(_) => StatusCode::CONFLICT,
            GatewayError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            GatewayError::Timeout { .. } => StatusCode::GATEWAY_TIMEOUT,
            _ => StatusCode::BAD_GATEWAY,
        };
        Self::new(status, e.kind(), e)
    }
}

/// JSON extractor whose rejections use the service error body.
pub struct Json<T>(pub T);

impl<T, S> FromRequest<S> for Json<T>
where
    axum::Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = AppError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        let axum::Json(v) = axum::Json::<T>::from_request(req, state).await?;
        Ok(Json(v))
    }
}

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, AppError>;

pub fn app() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/grade", post(grade_handler))
        .route("/v1/pass-at-k", post(pass_at_k_handler))
        .route("/v1/synth/search", post(synth_search))
        .route("/v1/synth/calculus", post(synth_calculus))
        .route("/v1/eval/run", post(eval_run))
        .route("/v1/eval/ablate", post(eval_ablate))
        .route("/v1/eval/stats", post(eval_stats))
        .route("/v1/sample", post(sample))
        .route("/v1/annotate", post(annotate))
        .route("/v1/dataset/build", post(dataset_build))
        .route("/v1/dataset/split", post(dataset_split))
        .route("/v1/dataset/report", post(dataset_report))
        .route("/v1/sim/run", post(sim_run))
        .route("/v1/sim/sweep", post(sim_sweep))
        .route("/v1/report", post(report))
}

async fn health() -> &'static str {
    "ok"
}

async fn grade_handler(Json(req): Json<GradeRequest>) -> ApiResult<GradeResult> {
    Ok(Json(grade(&req.completion, &req.reference)))
}

async fn pass_at_k_handler(Json(req): Json<PassKInput>) -> ApiResult<PassAtKResponse> {
    Ok(Json(PassAtKResponse { value: pass_at_k(req)? }))
}

async fn synth_search(Json(req): Json<SearchSynthRequest>) -> ApiResult<Vec<TaskRecord>> {
    Ok(Json(gen_search_tasks(req.seed, req.count, &req.mix)?))
}

async fn synth_calculus(Json(req): Json<CalculusSynthRequest>) -> ApiResult<Vec<TaskRecord>> {
    let kind: CalculusKind = req.kind.parse()?;
    let tasks = gen_calculus(req.seed, kind, req.count)?;
    Ok(Json(tasks.into_iter().map(TaskRecord::from).collect()))
}

fn client_for(endpoint: &rcf_core::api::EndpointConfig) -> Result<ChatClient, AppError> {
    validate(endpoint)?;
    let client = ChatClient::new(endpoint.clone())?;
    Ok(match &endpoint.audit_log {
        Some(path) => client.with_audit(std::sync::Arc::new(rcf_gateway::audit::AuditLog::open(path)?)),
        None => client,
    })
}

fn run_options(req: &EvalRequest) -> RunOptions {
    let mut opts = RunOptions::new(req.benchmark.clone(), req.sampling);
    opts.exclude_failed = req.exclude_failed;
    opts.stats = req.stats.clone();
    opts.run_dir = req.run_dir.as_ref().map(PathBuf::from);
    opts
}

async fn eval_run(Json(req): Json<EvalRequest>) -> ApiResult<RunReport> {
    let [condition] = <[_; 1]>::try_from(req.conditions.clone())
        .map_err(|c: Vec<_>| AppError::invalid(format!("a run takes exactly one condition, got {}", c.len())))?;
    let client = client_for(&req.endpoint)?;
    Ok(Json(run_benchmark(&client, &req.items, condition, &run_options(&req)).await?))
}

async fn eval_ablate(Json(req): Json<EvalRequest>) -> ApiResult<RunReport> {
    let client = client_for(&req.endpoint)?;
    Ok(Json(run_ablation(&client, &req.items, &req.conditions, &run_options(&req)).await?))
}

async fn eval_stats(Json(req): Json<StatsRequest>) -> ApiResult<TraceStats> {
    Ok(Json(trace_stats(&req.traces, &req.verdicts, &req.options)?))
}

async fn sample(Json(req): Json<SampleRequest>) -> ApiResult<SampleResponse> {
    rcf_core::harness::validate_benchmark(&req.items)?;
    let client = client_for(&req.endpoint)?;
    let results = sample_batch(&client, &req.items, req.n, req.temperature).await;
    let keys = req.items.iter().flat_map(|it| (0..req.n).map(move |i| (it.id.clone(), i)));
    let mut traces = Vec::new();
    let mut errors = Vec::new();
    for ((task_id, sample_index), r) in keys.zip(results) {
        match r {
            Ok(t) => traces.push(t),
            Err(e) => errors.push(SampleError { task_id, sample_index, error: e.to_string() }),
        }
    }
    if req.filter_correct {
        let refs: HashMap<String, String> = req.items.iter().map(|i| (i.id.clone(), i.answer.clone())).collect();
        traces = filter_correct(traces, &refs, &BoxedAnswerGrader);
    }
    Ok(Json(SampleResponse { traces, errors }))
}

async fn annotate(Json(req): Json<AnnotateRequest>) -> ApiResult<AnnotationRecord> {
    let client = client_for(&req.endpoint)?;
    Ok(Json(annotate_trace(&client, "annotate", &req.query, &req.trace).await?))
}

async fn dataset_build(Json(req): Json<BuildRequest>) -> ApiResult<RecordsBody> {
    Ok(Json(RecordsBody { records: build_records(&req.samples)? }))
}

async fn dataset_split(Json(req): Json<SplitRequest>) -> ApiResult<DatasetSplit> {
    Ok(Json(split_dataset(&req.records, (req.train, req.validation), req.seed)?))
}

async fn dataset_report(Json(req): Json<RecordsBody>) -> ApiResult<DatasetSummary> {
    Ok(Json(summarize(&req.records)))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, AppError> + Send + 'static,
) -> Result<T, AppError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))?
}

async fn sim_run(Json(req): Json<SimRunRequest>) -> ApiResult<Vec<SimRecord>> {
    let out = blocking(move || {
        req.seeds
            .iter()
            .map(|&s| SimRecord::simulate(s, req.tree, req.execution).map_err(AppError::from))
            .collect()
    })
    .await?;
    Ok(Json(out))
}

async fn sim_sweep(Json(req): Json<SweepRequest>) -> ApiResult<Vec<SweepTable>> {
    let out = blocking(move || Ok(standard_sweeps(&req.config, req.correction_trap_rate)?)).await?;
    Ok(Json(out))
}

async fn report(Json(req): Json<ReportRequest>) -> ApiResult<ReportResponse> {
    Ok(Json(ReportResponse { rendered: render_any(&req.text)? }))
}
