use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rcf_client::{parse_endpoint_toml, RcfClient, DEFAULT_SERVER};
use rcf_core::api::{
    AnnotateRequest, BuildRequest, CalculusSynthRequest, EndpointConfig, EvalRequest, SampleRequest,
    SearchSynthRequest, SimRunRequest, SplitRequest, StatsRequest, SweepRequest, TreeParams,
};
use rcf_core::chat::SampledTrace;
use rcf_core::dataset::{AnnotatedSample, DatasetSummary, Subset, TrainingRecord};
use rcf_core::harness::{
    load_benchmark, render_comparison_table, render_stats_table, AblationCondition, BenchmarkItem, RunReport,
    SamplingParams, StatsOptions, TokenizerMode, DEFAULT_WAIT_KEYWORD,
};
use rcf_core::jsonl::{read_jsonl, to_jsonl};
use rcf_core::sim::{render_sweep_table, SweepConfig};
use rcf_core::synth::{SearchTaskMix, TaskRecord};

#[derive(Parser)]
#[command(name = "rcf", version, about = "Client for the rcf evaluation and dataset service")]
struct Cli {
    /// Service base URL.
    #[arg(long, global = true, env = "RCF_SERVER", default_value = DEFAULT_SERVER)]
    server: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Training-set construction.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Tree-search simulator.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Task synthesis.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Render an evaluation report or a training log as tables.
    Report { path: PathBuf },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Evaluate one condition.
    Run(EvalArgs),
    /// Evaluate several conditions on the same items.
    Ablate(EvalArgs),
    /// Length and keyword statistics of graded traces.
    Stats(StatsArgs),
}

#[derive(Args)]
struct StatsFlags {
    /// whitespace or chars.
    #[arg(long, default_value = "whitespace")]
    tokenizer_mode: TokenizerMode,
    #[arg(long)]
    case_sensitive_wait: bool,
    #[arg(long, default_value = DEFAULT_WAIT_KEYWORD)]
    wait_keyword: String,
}

impl StatsFlags {
    fn options(&self) -> StatsOptions {
        StatsOptions {
            tokenizer: self.tokenizer_mode,
            case_sensitive: self.case_sensitive_wait,
            keyword: self.wait_keyword.clone(),
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    /// TOML endpoint config.
    #[arg(long)]
    endpoint: PathBuf,
    /// Benchmark JSONL of {id, problem, answer, source}.
    #[arg(long)]
    benchmark: PathBuf,
    /// Benchmark name used in the report; defaults to the file stem.
    #[arg(long)]
    name: Option<String>,
    /// no_control, a uniform score 0-9, or eleven comma-separated scores.
    /// Repeat for an ablation; an ablation without any uses
    /// no_control, 0, 5 and 9.
    #[arg(long)]
    condition: Vec<AblationCondition>,
    #[arg(long, default_value_t = 1)]
    n: u32,
    #[arg(long, default_value_t = 1)]
    k: u32,
    /// Defaults to 0 for a single sample and 1.0 otherwise.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Leave items with failed samples out of the aggregate.
    #[arg(long)]
    exclude_failed: bool,
    /// Keeps an audit log so an interrupted run can be resumed.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    stats: StatsFlags,
}

#[derive(Args)]
struct StatsArgs {
    /// A report written by `eval run` or `eval ablate`.
    #[arg(long, conflicts_with = "traces", required_unless_present = "traces")]
    report: Option<PathBuf>,
    /// JSONL of {trace, correct}.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    stats: StatsFlags,
}

#[derive(Deserialize)]
struct TraceLine {
    trace: String,
    correct: bool,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Draw traces from an endpoint for each benchmark item.
    Sample {
        #[arg(long)]
        endpoint: PathBuf,
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, default_value_t = 4)]
        n: u32,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        /// Keep only traces whose boxed answer matches the reference.
        #[arg(long)]
        filter_correct: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score sampled traces with an annotator endpoint.
    Annotate {
        #[arg(long)]
        endpoint: PathBuf,
        #[arg(long)]
        benchmark: PathBuf,
        /// Output of `dataset sample`.
        #[arg(long)]
        traces: PathBuf,
        /// main, search_task or extended.
        #[arg(long, default_value = "main")]
        source: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn annotated samples into chat-format training records.
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split records into train and validation by query.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        train: f64,
        #[arg(long, default_value_t = 0.1)]
        validation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Receives train.jsonl and validation.jsonl.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Field histograms and trace lengths.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct TreeFlags {
    #[arg(long, default_value_t = 6)]
    depth: u32,
    #[arg(long, default_value_t = 4)]
    branching: u32,
    #[arg(long, default_value_t = 0.1)]
    trap_rate: f64,
}

#[derive(Subcommand)]
enum SimCommand {
    /// Simulate one episode per seed.
    Run {
        /// Number of seeds, starting at --first-seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[command(flatten)]
        tree: TreeFlags,
        /// Five comma-separated execution scores.
        #[arg(long, default_value = "5,5,5,5,5", value_parser = parse_execution)]
        execution: [u8; 5],
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vary each execution field over 0-9 and tabulate behaviour.
    Sweep {
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        #[command(flatten)]
        tree: TreeFlags,
        #[arg(long, default_value_t = 5)]
        base_score: u8,
        #[arg(long, default_value_t = 0.3)]
        correction_trap_rate: f64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Mixed 24-points and calculus tasks.
    Search {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        solvable_only: bool,
        #[command(flatten)]
        out: SynthOut,
    },
    /// One calculus task family.
    Calculus {
        /// differentiate, integrate, limit or ode.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[command(flatten)]
        out: SynthOut,
    },
}

#[derive(Args)]
struct SynthOut {
    /// Emit benchmark items instead of task records.
    #[arg(long)]
    as_benchmark: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_execution(s: &str) -> Result<[u8; 5], String> {
    let scores = s
        .split(',')
        .map(|p| p.trim().parse::<u8>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    scores.try_into().map_err(|v: Vec<u8>| format!("expected 5 scores, got {}", v.len()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_jsonl(io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn write_records<T: Serialize>(path: Option<&Path>, records: &[T]) -> Result<()> {
    let text = to_jsonl(records)?;
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn load_endpoint(path: &Path) -> Result<EndpointConfig> {
    Ok(parse_endpoint_toml(&read_text(path)?)?)
}

fn load_items(path: &Path) -> Result<Vec<BenchmarkItem>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(load_benchmark(io::BufReader::new(file))?)
}

fn eval_request(args: &EvalArgs, ablate: bool) -> Result<EvalRequest> {
    let conditions = match (ablate, args.condition.is_empty()) {
        (true, true) => AblationCondition::standard_matrix(),
        (false, true) => vec![AblationCondition::NoControl],
        (false, false) if args.condition.len() > 1 => bail!("`eval run` takes one --condition; use `eval ablate`"),
        _ => args.condition.clone(),
    };
    let mut sampling = SamplingParams::new(args.n, args.k);
    if let Some(t) = args.temperature {
        sampling.temperature = t;
    }
    sampling.max_tokens = args.max_tokens;
    sampling.seed = args.seed;
    let name = args.name.clone().unwrap_or_else(|| {
        args.benchmark.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    Ok(EvalRequest {
        benchmark: name,
        items: load_items(&args.benchmark)?,
        endpoint: load_endpoint(&args.endpoint)?,
        conditions,
        sampling,
        exclude_failed: args.exclude_failed,
        stats: args.stats.options(),
        run_dir: args.run_dir.as_ref().map(|p| p.to_string_lossy().into_owned()),
    })
}

fn print_report(report: &RunReport, out: Option<&Path>) -> Result<()> {
    if let Some(p) = out {
        fs::write(p, serde_json::to_string_pretty(report)?).with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{}", render_comparison_table(report));
    for c in &report.conditions {
        if !c.excluded.is_empty() {
            println!("{}: excluded {}", c.label, c.excluded.join(", "));
        }
    }
    Ok(())
}

fn render_dataset_summary(s: &DatasetSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "records {}  queries {}", s.total, s.queries);
    for (subset, n) in &s.per_subset {
        let _ = writeln!(out, "  {subset:<12} {n}");
    }
    if let Some(l) = &s.trace_length {
        let _ = writeln!(
            out,
            "trace length: min {} max {} mean {:.1} median {:.1}",
            l.min, l.max, l.mean, l.median
        );
    }
    let _ = writeln!(out, "length buckets");
    for (edge, n) in &s.length_buckets {
        let _ = writeln!(out, "  >= {edge:<8} {n}");
    }
    let _ = writeln!(out, "{:<28} {}", "field", (0..10).map(|i| format!("{i:>5}")).collect::<String>());
    for (field, h) in &s.histograms {
        let _ = writeln!(out, "{field:<28} {}", h.iter().map(|c| format!("{c:>5}")).collect::<String>());
    }
    out
}

async fn eval(client: &RcfClient, cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Run(args) => {
            let report = client.eval_run(&eval_request(&args, false)?).await?;
            print_report(&report, args.out.as_deref())
        }
        EvalCommand::Ablate(args) => {
            let report = client.eval_ablate(&eval_request(&args, true)?).await?;
            print_report(&report, args.out.as_deref())
        }
        EvalCommand::Stats(args) => {
            let (traces, verdicts) = if let Some(path) = &args.report {
                let report: RunReport = serde_json::from_str(&read_text(path)?)?;
                let mut pairs = Vec::new();
                for s in report.conditions.iter().flat_map(|c| &c.items).flat_map(|i| &i.samples) {
                    if let (Some(t), Some(g)) = (&s.trace, &s.grade) {
                        pairs.push((t.completion.clone(), g.equivalent));
                    }
                }
                pairs.into_iter().unzip()
            } else {
                let lines: Vec<TraceLine> = read_records(args.traces.as_deref().expect("required by clap"))?;
                lines.into_iter().map(|l| (l.trace, l.correct)).unzip()
            };
            let req = StatsRequest { traces, verdicts, options: args.stats.options() };
            let stats = client.eval_stats(&req).await?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{}", render_stats_table(&stats));
            }
            Ok(())
        }
    }
}

async fn dataset(client: &RcfClient, cmd: DatasetCommand) -> Result<()> {
    match cmd {
        DatasetCommand::Sample { endpoint, benchmark, n, temperature, filter_correct, out } => {
            let req = SampleRequest {
                endpoint: load_endpoint(&endpoint)?,
                items: load_items(&benchmark)?,
                n,
                temperature,
                filter_correct,
            };
            let resp = client.sample(&req).await?;
            for e in &resp.errors {
                eprintln!("{}#{}: {}", e.task_id, e.sample_index, e.error);
            }
            write_records(Some(&out), &resp.traces)?;
            eprintln!("{} traces, {} failed", resp.traces.len(), resp.errors.len());
            Ok(())
        }
        DatasetCommand::Annotate { endpoint, benchmark, traces, source, out } => {
            let source: Subset = serde_json::from_value(serde_json::Value::String(source))
                .context("source must be main, search_task or extended")?;
            let endpoint = load_endpoint(&endpoint)?;
            let queries: HashMap<String, String> =
                load_items(&benchmark)?.into_iter().map(|i| (i.id, i.problem)).collect();
            let traces: Vec<SampledTrace> = read_records(&traces)?;
            let mut samples = Vec::new();
            for t in traces {
                let Some(query) = queries.get(&t.query_id) else {
                    bail!("trace for unknown query {}", t.query_id);
                };
                let req = AnnotateRequest { endpoint: endpoint.clone(), query: query.clone(), trace: t.completion.clone() };
                match client.annotate(&req).await {
                    Ok(annotation) => samples.push(AnnotatedSample {
                        query_id: t.query_id,
                        query: query.clone(),
                        trace: t.completion,
                        annotation,
                        source,
                        sample_index: t.sample_index,
                        graded_correct: true,
                    }),
                    Err(e) => eprintln!("{}#{}: {e}", t.query_id, t.sample_index),
                }
            }
            write_records(Some(&out), &samples)
        }
        DatasetCommand::Build { input, out } => {
            let samples: Vec<AnnotatedSample> = read_records(&input)?;
            let records = client.dataset_build(&BuildRequest { samples }).await?;
            eprintln!("{} records", records.len());
            write_records(Some(&out), &records)
        }
        DatasetCommand::Split { input, train, validation, seed, out_dir } => {
            let records: Vec<TrainingRecord> = read_records(&input)?;
            let split = client.dataset_split(&SplitRequest { records, train, validation, seed }).await?;
            fs::create_dir_all(&out_dir)?;
            write_records(Some(&out_dir.join("train.jsonl")), &split.train)?;
            write_records(Some(&out_dir.join("validation.jsonl")), &split.validation)?;
            eprintln!("train {} validation {}", split.train.len(), split.validation.len());
            Ok(())
        }
        DatasetCommand::Report { input, json } => {
            let summary = client.dataset_report(read_records(&input)?).await?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{}", render_dataset_summary(&summary));
            }
            Ok(())
        }
    }
}

async fn sim(client: &RcfClient, cmd: SimCommand) -> Result<()> {
    match cmd {
        SimCommand::Run { seeds, first_seed, tree, execution, out } => {
            let req = SimRunRequest {
                seeds: (first_seed..first_seed + seeds).collect(),
                tree: TreeParams { depth: tree.depth, branching: tree.branching, trap_rate: tree.trap_rate },
                execution,
            };
            write_records(out.as_deref(), &client.sim_run(&req).await?)
        }
        SimCommand::Sweep { seeds, tree, base_score, correction_trap_rate, json } => {
            let req = SweepRequest {
                config: SweepConfig {
                    seeds,
                    depth: tree.depth,
                    branching: tree.branching,
                    trap_rate: tree.trap_rate,
                    base_score,
                },
                correction_trap_rate,
            };
            let tables = client.sim_sweep(&req).await?;
            if json {
                write_records(None, &tables)?;
            } else {
                for t in &tables {
                    println!("{}", render_sweep_table(t));
                }
            }
            Ok(())
        }
    }
}

fn as_benchmark(tasks: Vec<TaskRecord>) -> Vec<BenchmarkItem> {
    tasks
        .into_iter()
        .map(|t| BenchmarkItem { id: t.id, problem: t.statement, answer: t.reference_answer, source: t.kind })
        .collect()
}

async fn synth(client: &RcfClient, cmd: SynthCommand) -> Result<()> {
    let (tasks, out) = match cmd {
        SynthCommand::Search { seed, count, solvable_only, out } => {
            let mix = SearchTaskMix { solvable_only, ..SearchTaskMix::default() };
            (client.synth_search(&SearchSynthRequest { seed, count, mix }).await?, out)
        }
        SynthCommand::Calculus { kind, seed, count, out } => {
            (client.synth_calculus(&CalculusSynthRequest { seed, kind, count }).await?, out)
        }
    };
    if out.as_benchmark {
        write_records(out.out.as_deref(), &as_benchmark(tasks))
    } else {
        write_records(out.out.as_deref(), &tasks)
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    let client = RcfClient::new(&cli.server);
    match cli.command {
        Command::Eval(cmd) => eval(&client, cmd).await,
        Command::Dataset(cmd) => dataset(&client, cmd).await,
        Command::Sim(cmd) => sim(&client, cmd).await,
        Command::Synth(cmd) => synth(&client, cmd).await,
        Command::Report { path } => {
            print!("{}", client.report(&read_text(&path)?).await?);
            Ok(())
        }
    }
}
