//! Thin typed client for the rcf HTTP service.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use rcf_core::api::{
    AnnotateRequest, ApiError, BuildRequest, CalculusSynthRequest, EndpointConfig, EvalRequest, GradeRequest,
    PassAtKResponse, RecordsBody, ReportRequest, ReportResponse, SampleRequest, SampleResponse, SearchSynthRequest,
    SimRecord, SimRunRequest, SplitRequest, StatsRequest, SweepRequest,
};
use rcf_core::dataset::{DatasetSplit, DatasetSummary, TrainingRecord};
use rcf_core::grading::{GradeResult, PassKInput};
use rcf_core::harness::{RunReport, TraceStats};
use rcf_core::rcf::AnnotationRecord;
use rcf_core::sim::SweepTable;
use rcf_core::synth::TaskRecord;

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status} ({kind}): {message}")]
    Api { status: u16, kind: String, message: String },
    #[error("could not decode response: {0}")]
    Decode(String),
    #[error("bad endpoint config: {0}")]
    Config(String),
}

impl ClientError {
    /// The service's error kind, when the server answered with one.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { kind, .. } => Some(kind),
            _ => None,
        }
    }
}

/// Parses an endpoint config from TOML; missing keys take their defaults.
pub fn parse_endpoint_toml(text: &str) -> Result<EndpointConfig, ClientError> {
    toml::from_str(text).map_err(|e| ClientError::Config(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct RcfClient {
    base: String,
    http: reqwest::Client,
}

impl RcfClient {
    pub fn new(base: impl Into<String>) -> Self {
        RcfClient {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, ClientError> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if !status.is_success() {
            return Err(match serde_json::from_slice::<ApiError>(&bytes) {
                Ok(e) => ClientError::Api { status: status.as_u16(), kind: e.kind, message: e.error },
                Err(_) => ClientError::Api {
                    status: status.as_u16(),
                    kind: "http".into(),
                    message: String::from_utf8_lossy(&bytes).into_owned(),
                },
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        self.http.get(format!("{}/health", self.base)).send().await?.error_for_status()?;
        Ok(())
    }

    pub async fn grade(&self, completion: &str, reference: &str) -> Result<GradeResult, ClientError> {
        let body = GradeRequest { completion: completion.into(), reference: reference.into() };
        self.post("/v1/grade", &body).await
    }

    pub async fn pass_at_k(&self, n: u64, c: u64, k: u64) -> Result<f64, ClientError> {
        let r: PassAtKResponse = self.post("/v1/pass-at-k", &PassKInput { n, c, k }).await?;
        Ok(r.value)
    }

    pub async fn synth_search(&self, req: &SearchSynthRequest) -> Result<Vec<TaskRecord>, ClientError> {
        self.post("/v1/synth/search", req).await
    }

    pub async fn synth_calculus(&self, req: &CalculusSynthRequest) -> Result<Vec<TaskRecord>, ClientError> {
        self.post("/v1/synth/calculus", req).await
    }

    pub async fn eval_run(&self, req: &EvalRequest) -> Result<RunReport, ClientError> {
        self.post("/v1/eval/run", req).await
    }

    pub async fn eval_ablate(&self, req: &EvalRequest) -> Result<RunReport, ClientError> {
        self.post("/v1/eval/ablate", req).await
    }

    pub async fn eval_stats(&self, req: &StatsRequest) -> Result<TraceStats, ClientError> {
        self.post("/v1/eval/stats", req).await
    }

    pub async fn sample(&self, req: &SampleRequest) -> Result<SampleResponse, ClientError> {
        self.post("/v1/sample", req).await
    }

    pub async fn annotate(&self, req: &AnnotateRequest) -> Result<AnnotationRecord, ClientError> {
        self.post("/v1/annotate", req).await
    }

    pub async fn dataset_build(&self, req: &BuildRequest) -> Result<Vec<TrainingRecord>, ClientError> {
        let r: RecordsBody = self.post("/v1/dataset/build", req).await?;
        Ok(r.records)
    }

    pub async fn dataset_split(&self, req: &SplitRequest) -> Result<DatasetSplit, ClientError> {
        self.post("/v1/dataset/split", req).await
    }

    pub async fn dataset_report(&self, records: Vec<TrainingRecord>) -> Result<DatasetSummary, ClientError> {
        self.post("/v1/dataset/report", &RecordsBody { records }).await
    }

    pub async fn sim_run(&self, req: &SimRunRequest) -> Result<Vec<SimRecord>, ClientError> {
        self.post("/v1/sim/run", req).await
    }

    pub async fn sim_sweep(&self, req: &SweepRequest) -> Result<Vec<SweepTable>, ClientError> {
        self.post("/v1/sim/sweep", req).await
    }

    pub async fn report(&self, text: &str) -> Result<String, ClientError> {
        let r: ReportResponse = self.post("/v1/report", &ReportRequest { text: text.into() }).await?;
        Ok(r.rendered)
    }
}
