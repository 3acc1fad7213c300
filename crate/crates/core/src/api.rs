//! Request and response bodies of the HTTP service.

use serde::{Deserialize, Serialize};

use crate::chat::SampledTrace;
use crate::dataset::{AnnotatedSample, TrainingRecord};
use crate::harness::{AblationCondition, BenchmarkItem, SamplingParams, StatsOptions};
use crate::rcf::{ControlFields, RcfError};
use crate::sim::{gen_tree, render_trace, run_policy, score_episode, QualityScores, SearchEpisode, SimError, SweepConfig};
use crate::synth::SearchTaskMix;

/// Where and how to reach an OpenAI-compatible chat endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base URL up to and including `/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset means no auth.
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    /// Whether a trailing assistant message is continued by the endpoint.
    pub supports_prefill: bool,
    /// Append-only JSONL of every request and response.
    pub audit_log: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            max_in_flight: 8,
            timeout_secs: 120,
            max_retries: 3,
            backoff_base_ms: 500,
            backoff_max_ms: 30_000,
            supports_prefill: true,
            audit_log: None,
        }
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            ..Self::default()
        }
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRequest {
    pub completion: String,
    pub reference: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassAtKResponse {
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSynthRequest {
    pub seed: u64,
    pub count: usize,
    #[serde(default)]
    pub mix: SearchTaskMix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalculusSynthRequest {
    pub seed: u64,
    pub kind: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub benchmark: String,
    pub items: Vec<BenchmarkItem>,
    pub endpoint: EndpointConfig,
    /// One condition for a plain run, two or more for an ablation.
    pub conditions: Vec<AblationCondition>,
    pub sampling: SamplingParams,
    #[serde(default)]
    pub exclude_failed: bool,
    #[serde(default)]
    pub stats: StatsOptions,
    /// Directory holding persisted run state; enables resume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRequest {
    pub traces: Vec<String>,
    pub verdicts: Vec<bool>,
    #[serde(default)]
    pub options: StatsOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub endpoint: EndpointConfig,
    pub items: Vec<BenchmarkItem>,
    pub n: u32,
    #[serde(default = "default_sampling_temperature")]
    pub temperature: f64,
    /// Drop samples that do not grade correct against the item answer.
    #[serde(default)]
    pub filter_correct: bool,
}

fn default_sampling_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub traces: Vec<SampledTrace>,
    /// Samples that could not be obtained.
    #[serde(default)]
    pub errors: Vec<SampleError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub task_id: String,
    pub sample_index: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub endpoint: EndpointConfig,
    pub query: String,
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRequest {
    pub samples: Vec<AnnotatedSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordsBody {
    pub records: Vec<TrainingRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRequest {
    pub records: Vec<TrainingRecord>,
    pub train: f64,
    pub validation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub depth: u32,
    pub branching: u32,
    pub trap_rate: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { depth: 6, branching: 4, trap_rate: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRunRequest {
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub tree: TreeParams,
    pub execution: [u8; 5],
}

/// One simulated episode with its scores and rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub seed: u64,
    pub tree: TreeParams,
    pub goal: usize,
    pub episode: SearchEpisode,
    pub quality: QualityScores,
    pub fields: ControlFields,
    pub control_string: String,
    pub trace: String,
}

impl SimRecord {
    /// Tree `seed` searched with policy seed `seed`.
    pub fn simulate(seed: u64, tree: TreeParams, execution: [u8; 5]) -> Result<Self, SimError> {
        let t = gen_tree(seed, tree.depth, tree.branching, tree.trap_rate)?;
        let episode = run_policy(&t, execution, seed)?;
        let quality = score_episode(&t, &episode)?;
        let fields = ControlFields::from_parts(execution, quality.to_array())
            .map_err(|e: RcfError| SimError::InvalidParams(e.to_string()))?;
        Ok(SimRecord {
            seed,
            tree,
            goal: t.goal,
            trace: render_trace(&episode),
            control_string: fields.to_control_string(),
            episode,
            quality,
            fields,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    #[serde(default)]
    pub config: SweepConfig,
    #[serde(default = "default_correction_trap_rate")]
    pub correction_trap_rate: f64,
}

pub fn default_correction_trap_rate() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub rendered: String,
}
