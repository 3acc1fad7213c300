//! Benchmark items, prompt construction, run reports and trace analytics.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::io::BufRead;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{ChatMessage, ChatRequest, SampledTrace, THINK_PREFIX};
use crate::grading::{mean_pass_at_k, pass_at_k, GradeResult, PassKInput};
use crate::jsonl::{read_jsonl, JsonlError};
use crate::rcf::{ControlFields, Score, FIELD_COUNT};

pub const INSTRUCTION: &str =
    "Please reason step by step, and put your final answer within \\boxed{}.";

/// How the user turn is assembled; recorded in every report.
pub const PROMPT_LAYOUT: &str =
    "problem + control_string (starts with \\n; omitted for no_control) + \\n + instruction; system = \"\"; assistant prefix = <think>\\n";

pub const DEFAULT_WAIT_KEYWORD: &str = "wait";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("item {id}: reference answer is empty")]
    EmptyReference { id: String },
    #[error("duplicate item id {0}")]
    DuplicateId(String),
    #[error("benchmark is empty")]
    EmptyBenchmark,
    #[error("invalid condition {0:?}")]
    InvalidCondition(String),
    #[error("ablation needs at least two conditions")]
    TooFewConditions,
    #[error("{traces} traces but {verdicts} verdicts")]
    LengthMismatch { traces: usize, verdicts: usize },
    #[error("invalid sampling parameters: {0}")]
    InvalidSampling(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub problem: String,
    pub answer: String,
    #[serde(default)]
    pub source: String,
}

impl BenchmarkItem {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.answer.trim().is_empty() {
            return Err(HarnessError::EmptyReference { id: self.id.clone() });
        }
        Ok(())
    }
}

pub fn validate_benchmark(items: &[BenchmarkItem]) -> Result<(), HarnessError> {
    if items.is_empty() {
        return Err(HarnessError::EmptyBenchmark);
    }
    let mut seen = HashSet::new();
    for item in items {
        item.validate()?;
        if !seen.insert(item.id.as_str()) {
            return Err(HarnessError::DuplicateId(item.id.clone()));
        }
    }
    Ok(())
}

pub fn load_benchmark(reader: impl BufRead) -> Result<Vec<BenchmarkItem>, HarnessError> {
    let items: Vec<BenchmarkItem> = read_jsonl(reader)?;
    validate_benchmark(&items)?;
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AblationCondition {
    NoControl,
    Uniform { value: Score },
    Explicit { fields: ControlFields },
}

impl AblationCondition {
    pub fn uniform(value: u8) -> Result<Self, HarnessError> {
        Score::new(value)
            .map(|value| AblationCondition::Uniform { value })
            .map_err(|_| HarnessError::InvalidCondition(value.to_string()))
    }

    pub fn control_fields(&self) -> Option<ControlFields> {
        match self {
            AblationCondition::NoControl => None,
            AblationCondition::Uniform { value } => Some(ControlFields::uniform_score(*value)),
            AblationCondition::Explicit { fields } => Some(*fields),
        }
    }

    /// Row label used in tables and reports.
    pub fn name(&self) -> String {
        self.to_string()
    }

    /// The standard ablation: no control, then every field at 0, 5 and 9.
    pub fn standard_matrix() -> Vec<AblationCondition> {
        let mut out = vec![AblationCondition::NoControl];
        for v in [0, 5, 9] {
            out.push(AblationCondition::uniform(v).expect("in range"));
        }
        out
    }
}

impl fmt::Display for AblationCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AblationCondition::NoControl => f.write_str("no_control"),
            AblationCondition::Uniform { value } => write!(f, "uniform({value})"),
            AblationCondition::Explicit { fields } => {
                let scores: Vec<String> = fields.scores().iter().map(u8::to_string).collect();
                write!(f, "explicit({})", scores.join(","))
            }
        }
    }
}

/// Accepts `no_control`, `N`, `uniform:N`, `uniform(N)`, or eleven
/// comma-separated scores (optionally wrapped in `explicit(...)`).
impl FromStr for AblationCondition {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::InvalidCondition(s.to_string());
        let t = s.trim();
        if t.eq_ignore_ascii_case("no_control") || t.eq_ignore_ascii_case("none") {
            return Ok(AblationCondition::NoControl);
        }
        let inner = t
            .strip_prefix("uniform:")
            .or_else(|| t.strip_prefix("uniform(").and_then(|r| r.strip_suffix(')')));
        if let Some(v) = inner {
            return AblationCondition::uniform(v.trim().parse().map_err(|_| bad())?).map_err(|_| bad());
        }
        if let Ok(v) = t.parse::<u8>() {
            return AblationCondition::uniform(v).map_err(|_| bad());
        }
        let list = t
            .strip_prefix("explicit(")
            .and_then(|r| r.strip_suffix(')'))
            .unwrap_or(t);
        let scores: Vec<u8> = list
            .split(',')
            .map(|p| p.trim().parse::<u8>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let arr: [u8; FIELD_COUNT] = scores.try_into().map_err(|_| bad())?;
        let fields = ControlFields::new(arr).map_err(|_| bad())?;
        Ok(AblationCondition::Explicit { fields })
    }
}

/// The user turn: problem, control string (if any), newline, instruction.
pub fn user_content(problem: &str, condition: &AblationCondition) -> String {
    let control = condition
        .control_fields()
        .map(|f| f.to_control_string())
        .unwrap_or_default();
    format!("{problem}{control}\n{INSTRUCTION}")
}

pub fn build_prompt(item: &BenchmarkItem, condition: &AblationCondition) -> ChatRequest {
    let mut req = ChatRequest::new(vec![
        ChatMessage::system(""),
        ChatMessage::user(user_content(&item.problem, condition)),
    ]);
    req.forced_prefix = Some(THINK_PREFIX.to_string());
    req
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub n: u32,
    pub k: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    /// Base seed; sample `i` of every item is requested with `seed + i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingParams {
    /// Greedy decoding for single-sample runs, temperature 1.0 otherwise.
    pub fn new(n: u32, k: u32) -> Self {
        SamplingParams {
            n,
            k,
            temperature: if n == 1 { 0.0 } else { 1.0 },
            max_tokens: None,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return Err(HarnessError::InvalidSampling(format!(
                "need 1 <= k <= n, got n={} k={}",
                self.n, self.k
            )));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(HarnessError::InvalidSampling(format!(
                "temperature {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    #[default]
    Whitespace,
    Chars,
}

impl TokenizerMode {
    pub fn count(self, text: &str) -> usize {
        match self {
            TokenizerMode::Whitespace => text.split_whitespace().count(),
            TokenizerMode::Chars => text.chars().count(),
        }
    }
}

impl FromStr for TokenizerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace" | "words" => Ok(TokenizerMode::Whitespace),
            "chars" | "characters" => Ok(TokenizerMode::Chars),
            other => Err(format!("unknown tokenizer mode {other:?}")),
        }
    }
}

impl fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenizerMode::Whitespace => "whitespace",
            TokenizerMode::Chars => "chars",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub tokenizer: TokenizerMode,
    pub case_sensitive: bool,
    pub keyword: String,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions {
            tokenizer: TokenizerMode::Whitespace,
            case_sensitive: false,
            keyword: DEFAULT_WAIT_KEYWORD.to_string(),
        }
    }
}

/// Whole-word occurrences of `keyword`.
pub fn count_keyword(text: &str, keyword: &str, case_sensitive: bool) -> usize {
    keyword_regex(keyword, case_sensitive).find_iter(text).count()
}

fn keyword_regex(keyword: &str, case_sensitive: bool) -> Regex {
    let flags = if case_sensitive { "" } else { "(?i)" };
    Regex::new(&format!(r"{flags}\b{}\b", regex::escape(keyword))).expect("escaped keyword")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub count: usize,
    pub longest: usize,
    pub shortest: usize,
    pub average: f64,
    pub most_wait: usize,
    pub least_wait: usize,
    pub average_wait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub options: StatsOptions,
    pub correct: Option<SplitStats>,
    pub wrong: Option<SplitStats>,
}

pub fn trace_stats<S: AsRef<str>>(
    traces: &[S],
    verdicts: &[bool],
    options: &StatsOptions,
) -> Result<TraceStats, HarnessError> {
    if traces.len() != verdicts.len() {
        return Err(HarnessError::LengthMismatch {
            traces: traces.len(),
            verdicts: verdicts.len(),
        });
    }
    let re = keyword_regex(&options.keyword, options.case_sensitive);
    let mut correct = Vec::new();
    let mut wrong = Vec::new();
    for (t, &ok) in traces.iter().zip(verdicts) {
        let t = t.as_ref();
        let m = (options.tokenizer.count(t), re.find_iter(t).count());
        if ok {
            correct.push(m);
        } else {
            wrong.push(m);
        }
    }
    Ok(TraceStats {
        options: options.clone(),
        correct: split_stats(&correct),
        wrong: split_stats(&wrong),
    })
}

fn split_stats(rows: &[(usize, usize)]) -> Option<SplitStats> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let lens = rows.iter().map(|r| r.0);
    let waits = rows.iter().map(|r| r.1);
    Some(SplitStats {
        count: rows.len(),
        longest: lens.clone().max()?,
        shortest: lens.clone().min()?,
        average: lens.sum::<usize>() as f64 / n,
        most_wait: waits.clone().max()?,
        least_wait: waits.clone().min()?,
        average_wait: waits.sum::<usize>() as f64 / n,
    })
}

/// One row per statistic, one column per split.
pub fn render_stats_table(stats: &TraceStats) -> String {
    type Getter = fn(&SplitStats) -> String;
    let rows: [(&str, Getter); 6] = [
        ("longest tokens", |s| s.longest.to_string()),
        ("shortest tokens", |s| s.shortest.to_string()),
        ("average tokens", |s| format!("{:.2}", s.average)),
        ("most wait", |s| s.most_wait.to_string()),
        ("least wait", |s| s.least_wait.to_string()),
        ("average wait", |s| format!("{:.2}", s.average_wait)),
    ];
    let cell = |split: &Option<SplitStats>, g: Getter| split.as_ref().map(g).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "tokenizer={} keyword={:?} case_sensitive={}",
        stats.options.tokenizer, stats.options.keyword, stats.options.case_sensitive
    );
    let _ = writeln!(out, "{:<16} | {:>10} | {:>10}", "statistic", "correct", "wrong");
    let _ = writeln!(out, "{}", "-".repeat(42));
    for (label, g) in rows {
        let _ = writeln!(
            out,
            "{:<16} | {:>10} | {:>10}",
            label,
            cell(&stats.correct, g),
            cell(&stats.wrong, g)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<SampledTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<GradeResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SampleOutcome {
    pub fn graded(trace: SampledTrace, grade: GradeResult) -> Self {
        SampleOutcome {
            sample_index: trace.sample_index,
            trace: Some(trace),
            grade: Some(grade),
            error: None,
        }
    }

    pub fn failed(sample_index: u32, error: impl Into<String>) -> Self {
        SampleOutcome {
            sample_index,
            trace: None,
            grade: None,
            error: Some(error.into()),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.grade.as_ref().is_some_and(|g| g.equivalent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Graded,
    /// At least one sample could not be generated.
    Ungraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub source: String,
    pub reference: String,
    pub status: ItemStatus,
    pub samples: Vec<SampleOutcome>,
    pub n: u32,
    pub correct: u32,
    pub pass_at_k: f64,
}

impl ItemResult {
    /// Failed samples count as incorrect.
    pub fn assemble(item: &BenchmarkItem, mut samples: Vec<SampleOutcome>, k: u32) -> Self {
        samples.sort_by_key(|s| s.sample_index);
        let n = samples.len() as u32;
        let correct = samples.iter().filter(|s| s.is_correct()).count() as u32;
        let status = if samples.iter().any(|s| s.grade.is_none()) {
            ItemStatus::Ungraded
        } else {
            ItemStatus::Graded
        };
        let pass = pass_at_k(PassKInput {
            n: u64::from(n),
            c: u64::from(correct),
            k: u64::from(k.min(n.max(1))),
        })
        .unwrap_or(0.0);
        ItemResult {
            id: item.id.clone(),
            source: item.source.clone(),
            reference: item.answer.clone(),
            status,
            samples,
            n,
            correct,
            pass_at_k: pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: AblationCondition,
    pub label: String,
    pub items: Vec<ItemResult>,
    /// Mean of `pass_at_k` over the included items.
    pub aggregate_pass_at_k: f64,
    /// Ungraded items left out of the aggregate (only with `exclude_failed`).
    #[serde(default)]
    pub excluded: Vec<String>,
    pub trace_stats: TraceStats,
}

impl ConditionReport {
    pub fn assemble(
        condition: AblationCondition,
        items: Vec<ItemResult>,
        exclude_failed: bool,
        stats: &StatsOptions,
    ) -> Self {
        let mut excluded = Vec::new();
        let mut values = Vec::new();
        for item in &items {
            if exclude_failed && item.status == ItemStatus::Ungraded {
                excluded.push(item.id.clone());
            } else {
                values.push(item.pass_at_k);
            }
        }
        let mut texts = Vec::new();
        let mut verdicts = Vec::new();
        for s in items.iter().flat_map(|i| &i.samples) {
            if let (Some(t), Some(g)) = (&s.trace, &s.grade) {
                texts.push(t.completion.as_str());
                verdicts.push(g.equivalent);
            }
        }
        let trace_stats = trace_stats(&texts, &verdicts, stats).expect("paired by construction");
        ConditionReport {
            label: condition.name(),
            condition,
            items,
            aggregate_pass_at_k: mean_pass_at_k(&values).unwrap_or(0.0),
            excluded,
            trace_stats,
        }
    }

    pub fn verdicts(&self) -> Vec<(String, f64)> {
        self.items.iter().map(|i| (i.id.clone(), i.pass_at_k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub benchmark: String,
    pub model: String,
    pub sampling: SamplingParams,
    pub prompt_layout: String,
    pub exclude_failed: bool,
    pub conditions: Vec<ConditionReport>,
}

impl RunReport {
    /// Aggregate of the first condition; the whole answer for single runs.
    pub fn aggregate(&self) -> Option<f64> {
        self.conditions.first().map(|c| c.aggregate_pass_at_k)
    }

    pub fn condition(&self, label: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.label == label)
    }
}

/// One row per condition in input order, one column per
/// benchmark source, then the overall mean.
pub fn render_comparison_table(report: &RunReport) -> String {
    let mut sources: Vec<String> = Vec::new();
    for c in &report.conditions {
        for i in &c.items {
            if !sources.contains(&i.source) {
                sources.push(i.source.clone());
            }
        }
    }
    let label_width = report
        .conditions
        .iter()
        .map(|c| c.label.len())
        .max()
        .unwrap_or(0)
        .max("condition".len());
    let mut out = String::new();
    let metric = format!("pass@{}", report.sampling.k);
    let _ = write!(out, "{:<label_width$}", "condition");
    for s in &sources {
        let name = if s.is_empty() { "-" } else { s.as_str() };
        let _ = write!(out, " | {:>10}", name);
    }
    let _ = writeln!(out, " | {:>10}", metric);
    let _ = writeln!(out, "{}", "-".repeat(label_width + 13 * (sources.len() + 1)));
    for c in &report.conditions {
        let _ = write!(out, "{:<label_width$}", c.label);
        for s in &sources {
            let vals: Vec<f64> = c
                .items
                .iter()
                .filter(|i| &i.source == s && !c.excluded.contains(&i.id))
                .map(|i| i.pass_at_k)
                .collect();
            let cell = mean_pass_at_k(&vals)
                .map(|v| format!("{:.1}", v * 100.0))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " | {:>10}", cell);
        }
        let _ = writeln!(out, " | {:>10.1}", c.aggregate_pass_at_k * 100.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::grade;
    use crate::rcf::parse_control_string;

    fn item(id: &str, answer: &str) -> BenchmarkItem {
        BenchmarkItem {
            id: id.into(),
            problem: format!("Problem {id}?"),
            answer: answer.into(),
            source: "toy".into(),
        }
    }

    #[test]
    fn prompt_shape() {
        let req = build_prompt(&item("a", "1"), &AblationCondition::uniform(9).unwrap());
        assert_eq!(req.messages[0].content, "");
        assert_eq!(req.forced_prefix.as_deref(), Some("<think>\n"));
        let user = req.user_content().unwrap();
        assert_eq!(
            user,
            "Problem a?\n<control> search_depth: 9; search_breadth: 9; error_detection: 9; \
             error_correction: 9; strategy_switching: 9; correctness: 9; efficiency: 9; \
             completeness: 9; coherence: 9; knowledge_accuracy: 9; clarity_of_steps: 9 <control/>\n\
             Please reason step by step, and put your final answer within \\boxed{}."
        );
        assert_eq!(parse_control_string(user).unwrap(), ControlFields::uniform(9).unwrap());
    }

    #[test]
    fn no_control_prompt() {
        let req = build_prompt(&item("a", "1"), &AblationCondition::NoControl);
        let user = req.user_content().unwrap();
        assert!(!user.contains("<control>"));
        assert_eq!(user, format!("Problem a?\n{INSTRUCTION}"));
    }

    #[test]
    fn uniform_prompts_differ_only_in_span() {
        let it = item("a", "1");
        let prompts: Vec<String> = [0, 5, 9]
            .iter()
            .map(|&v| build_prompt(&it, &AblationCondition::uniform(v).unwrap()).user_content().unwrap().to_string())
            .collect();
        for (i, a) in prompts.iter().enumerate() {
            for b in &prompts[i + 1..] {
                assert_ne!(a, b);
                let strip = |s: &str| {
                    let start = s.find("<control>").unwrap();
                    let end = s.find("<control/>").unwrap();
                    format!("{}{}", &s[..start], &s[end..])
                };
                assert_eq!(strip(a), strip(b));
            }
        }
    }

    #[test]
    fn condition_parsing() {
        assert_eq!("no_control".parse::<AblationCondition>().unwrap(), AblationCondition::NoControl);
        assert_eq!("7".parse::<AblationCondition>().unwrap(), AblationCondition::uniform(7).unwrap());
        assert_eq!("uniform:3".parse::<AblationCondition>().unwrap().to_string(), "uniform(3)");
        assert_eq!("uniform(3)".parse::<AblationCondition>().unwrap().to_string(), "uniform(3)");
        let e: AblationCondition = "1,2,3,4,5,6,7,8,9,0,1".parse().unwrap();
        assert_eq!(e.to_string(), "explicit(1,2,3,4,5,6,7,8,9,0,1)");
        assert_eq!(e.to_string().parse::<AblationCondition>().unwrap(), e);
        assert!("10".parse::<AblationCondition>().is_err());
        assert!("1,2".parse::<AblationCondition>().is_err());
        assert!(AblationCondition::uniform(10).is_err());
    }

    #[test]
    fn condition_json() {
        let c = AblationCondition::uniform(5).unwrap();
        let v = serde_json::to_value(c).unwrap();
        assert_eq!(v, serde_json::json!({"mode": "uniform", "value": 5}));
        assert!(serde_json::from_value::<AblationCondition>(serde_json::json!({"mode": "uniform", "value": 12})).is_err());
    }

    #[test]
    fn benchmark_validation() {
        assert!(matches!(validate_benchmark(&[]), Err(HarnessError::EmptyBenchmark)));
        assert!(matches!(
            validate_benchmark(&[item("a", "1"), item("a", "2")]),
            Err(HarnessError::DuplicateId(_))
        ));
        assert!(matches!(
            validate_benchmark(&[item("a", " ")]),
            Err(HarnessError::EmptyReference { .. })
        ));
        let text = r#"{"id":"x","problem":"1+1","answer":"2","source":"toy"}"#;
        assert_eq!(load_benchmark(text.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn wait_counting() {
        assert_eq!(count_keyword("Wait, wait. Wait!", "wait", false), 3);
        assert_eq!(count_keyword("Wait, wait. Wait!", "wait", true), 1);
        assert_eq!(count_keyword("awaited waiting wait", "wait", false), 1);
    }

    #[test]
    fn two_correct_traces() {
        let ten = ["w"; 10].join(" ");
        let twenty = vec!["w"; 20].join(" ");
        let s = trace_stats(&[ten, twenty], &[true, true], &StatsOptions::default()).unwrap();
        let c = s.correct.unwrap();
        assert_eq!((c.longest, c.shortest, c.average), (20, 10, 15.0));
        assert!(s.wrong.is_none());
    }

    #[test]
    fn stats_length_mismatch() {
        assert!(trace_stats(&["a"], &[], &StatsOptions::default()).is_err());
    }

    #[test]
    fn char_tokenizer() {
        assert_eq!(TokenizerMode::Chars.count("ab c"), 4);
        assert_eq!(TokenizerMode::Whitespace.count("ab\u{3000}c\n"), 2);
    }

    fn outcome(idx: u32, completion: &str, reference: &str) -> SampleOutcome {
        let t = SampledTrace::from_completion("q", idx, completion);
        let g = grade(completion, reference);
        SampleOutcome::graded(t, g)
    }

    #[test]
    fn item_and_condition_aggregation() {
        let a = item("a", "2");
        let b = item("b", "3");
        let ra = ItemResult::assemble(
            &a,
            vec![outcome(1, "\\boxed{1}", "2"), outcome(0, "\\boxed{2}", "2")],
            1,
        );
        assert_eq!(ra.samples[0].sample_index, 0);
        assert_eq!((ra.n, ra.correct, ra.pass_at_k), (2, 1, 0.5));
        let rb = ItemResult::assemble(&b, vec![SampleOutcome::failed(0, "boom"), outcome(1, "\\boxed{3}", "3")], 1);
        assert_eq!(rb.status, ItemStatus::Ungraded);
        assert_eq!(rb.pass_at_k, 0.5);

        let opts = StatsOptions::default();
        let c = ConditionReport::assemble(AblationCondition::NoControl, vec![ra.clone(), rb.clone()], false, &opts);
        assert_eq!(c.aggregate_pass_at_k, 0.5);
        assert_eq!(c.trace_stats.correct.as_ref().unwrap().count, 2);
        let c2 = ConditionReport::assemble(AblationCondition::NoControl, vec![ra, rb], true, &opts);
        assert_eq!(c2.excluded, vec!["b".to_string()]);
        assert_eq!(c2.aggregate_pass_at_k, 0.5);
    }

    #[test]
    fn comparison_table_rows_follow_input_order() {
        let opts = StatsOptions::default();
        let it = item("a", "1");
        let conds = AblationCondition::standard_matrix();
        let report = RunReport {
            benchmark: "toy".into(),
            model: "m".into(),
            sampling: SamplingParams::new(1, 1),
            prompt_layout: PROMPT_LAYOUT.into(),
            exclude_failed: false,
            conditions: conds
                .iter()
                .map(|c| {
                    let r = ItemResult::assemble(&it, vec![outcome(0, "\\boxed{1}", "1")], 1);
                    ConditionReport::assemble(*c, vec![r], false, &opts)
                })
                .collect(),
        };
        let table = render_comparison_table(&report);
        let labels: Vec<&str> = table
            .lines()
            .skip(2)
            .map(|l| l.split('|').next().unwrap().trim())
            .collect();
        assert_eq!(labels, vec!["no_control", "uniform(0)", "uniform(5)", "uniform(9)"]);
        assert!(table.lines().skip(2).all(|l| l.trim_end().ends_with("100.0")));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stats_permutation_invariant(
                rows in proptest::collection::vec(("[a-zA-Z ,.!]{0,40}", any::<bool>()), 0..12),
                rot in 0usize..12,
            ) {
                let opts = StatsOptions::default();
                let (t, v): (Vec<String>, Vec<bool>) = rows.iter().cloned().unzip();
                let base = trace_stats(&t, &v, &opts).unwrap();
                let mut rotated = rows.clone();
                if !rotated.is_empty() {
                    let r = rot % rotated.len();
                    rotated.rotate_left(r);
                }
                rotated.reverse();
                let (t2, v2): (Vec<String>, Vec<bool>) = rotated.into_iter().unzip();
                let other = trace_stats(&t2, &v2, &opts).unwrap();
                prop_assert_eq!(&base.correct.as_ref().map(|s| (s.count, s.longest, s.shortest, s.most_wait, s.least_wait)),
                                &other.correct.as_ref().map(|s| (s.count, s.longest, s.shortest, s.most_wait, s.least_wait)));
                prop_assert_eq!(&base.wrong.as_ref().map(|s| (s.count, s.longest, s.shortest, s.most_wait, s.least_wait)),
                                &other.wrong.as_ref().map(|s| (s.count, s.longest, s.shortest, s.most_wait, s.least_wait)));
                for (a, b) in [(&base.correct, &other.correct), (&base.wrong, &other.wrong)] {
                    if let (Some(a), Some(b)) = (a, b) {
                        prop_assert!((a.average - b.average).abs() < 1e-9);
                        prop_assert!((a.average_wait - b.average_wait).abs() < 1e-9);
                        prop_assert!(a.shortest as f64 <= a.average && a.average <= a.longest as f64);
                    }
                }
            }

            #[test]
            fn prompt_is_pure(problem in "[ -~]{0,60}", v in 0u8..=9) {
                let it = BenchmarkItem { id: "x".into(), problem, answer: "1".into(), source: String::new() };
                let c = AblationCondition::uniform(v).unwrap();
                prop_assert_eq!(build_prompt(&it, &c), build_prompt(&it, &c));
            }

            #[test]
            fn aggregate_is_mean(cs in proptest::collection::vec((1u32..6, 0u32..6), 1..10)) {
                let opts = StatsOptions::default();
                let mut items = Vec::new();
                let mut expected = Vec::new();
                for (idx, (n, c)) in cs.iter().enumerate() {
                    let c = (*c).min(*n);
                    let it = item(&idx.to_string(), "1");
                    let samples = (0..*n)
                        .map(|i| outcome(i, if i < c { "\\boxed{1}" } else { "\\boxed{0}" }, "1"))
                        .collect();
                    let r = ItemResult::assemble(&it, samples, 1);
                    expected.push(f64::from(c) / f64::from(*n));
                    items.push(r);
                }
                let rep = ConditionReport::assemble(AblationCondition::NoControl, items, false, &opts);
                let mean = expected.iter().sum::<f64>() / expected.len() as f64;
                prop_assert!((rep.aggregate_pass_at_k - mean).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&rep.aggregate_pass_at_k));
            }
        }
    }
}
