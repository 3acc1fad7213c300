//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Each check compares against an oracle written
//! here, independent of the code under test.

use std::collections::HashSet;
use std::fs::File;
use std::future::Future;
use std::io::BufReader;
use std::time::{Duration, Instant};

use rcf_client::RcfClient;
use rcf_core::api::{EndpointConfig, EvalRequest, StatsRequest};
use rcf_core::dataset::{AnnotatedSample, Subset, TrainingRecord};
use rcf_core::grading::{grade, load_grade_vectors, pass_at_k, PassKInput};
use rcf_core::harness::{count_keyword, AblationCondition, BenchmarkItem, SamplingParams, SplitStats, StatsOptions};
use rcf_core::rcf::{parse_control_string, serialize_control_string, AnnotationRecord, ControlFields, Field, RcfError};
use rcf_core::sim::{sweep, SweepConfig};
use rcf_core::synth::calculus::{parse_reference, parse_statement, sample_points, Statement, VARIABLE};
use rcf_core::synth::{gen_24, gen_calculus, CalculusKind};
use rcf_gateway::mock::{Matcher, MockReply, MockRule, MockScript, MockServer};

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn record(&mut self, name: &str, budget: Duration, elapsed: Duration, result: Check) {
        let result = result.and_then(|()| {
            ensure(elapsed <= budget, || format!("took {elapsed:?}, budget {budget:?}"))
        });
        match result {
            Ok(()) => println!("PASS {name} ({:.2}s)", elapsed.as_secs_f64()),
            Err(e) => {
                self.failed += 1;
                println!("FAIL {name} ({:.2}s): {e}", elapsed.as_secs_f64());
            }
        }
    }

    fn run(&mut self, name: &str, budget: Duration, f: impl FnOnce() -> Check) {
        let t = Instant::now();
        let r = f();
        self.record(name, budget, t.elapsed(), r);
    }

    async fn run_async<F: Future<Output = Check>>(&mut self, name: &str, budget: Duration, f: F) {
        let t = Instant::now();
        let r = f.await;
        self.record(name, budget, t.elapsed(), r);
    }
}

const EXAMPLE: &str = "\n<control> search_depth: 8; search_breadth: 7; error_detection: 8; error_correction: 7; strategy_switching: 6; correctness: 9; efficiency: 7; completeness: 8; coherence: 8; knowledge_accuracy: 9; clarity_of_steps: 8 <control/>";
const EXAMPLE_SCORES: [u8; 11] = [8, 7, 8, 7, 6, 9, 7, 8, 8, 9, 8];

fn control_with(entries: &[(String, String)]) -> String {
    let body: Vec<String> = entries.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    format!("\n<control> {} <control/>", body.join("; "))
}

fn control_string_fidelity() -> Check {
    let fields = parse_control_string(EXAMPLE).map_err(|e| e.to_string())?;
    ensure(fields.scores() == EXAMPLE_SCORES, || format!("parsed {:?}", fields.scores()))?;
    ensure(serialize_control_string(&fields) == EXAMPLE, || "round trip not byte-identical".into())?;
    let canonical: Vec<(String, String)> = Field::ALL
        .iter()
        .zip(EXAMPLE_SCORES)
        .map(|(f, s)| (f.key().to_string(), s.to_string()))
        .collect();
    for (i, field) in Field::ALL.iter().enumerate() {
        let key = field.key();
        let mut missing = canonical.clone();
        missing.remove(i);
        match parse_control_string(&control_with(&missing)) {
            Err(RcfError::MissingField(k)) if k == key => {}
            other => return Err(format!("missing {key}: {other:?}")),
        }
        let mut dup = canonical.clone();
        dup.insert(i, canonical[i].clone());
        match parse_control_string(&control_with(&dup)) {
            Err(RcfError::DuplicateField(k)) if k == key => {}
            other => return Err(format!("duplicate {key}: {other:?}")),
        }
        for bad in ["10", "12", "-1"] {
            let mut out = canonical.clone();
            out[i].1 = bad.to_string();
            let err = parse_control_string(&control_with(&out));
            let ok = matches!(&err, Err(RcfError::ScoreOutOfRange { field, .. }) if field == key);
            ensure(ok, || format!("{key}={bad}: {err:?}"))?;
        }
    }
    Ok(())
}

/// Fraction of the k-subsets of n samples (the first c correct) holding
/// at least one correct sample, by listing every subset.
fn pass_at_k_by_enumeration(n: u32, c: u32, k: u32) -> f64 {
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() != k {
            continue;
        }
        total += 1;
        if mask & ((1 << c) - 1) != 0 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

fn pass_at_k_oracle() -> Check {
    for n in 1..=8u32 {
        for c in 0..=n {
            for k in 1..=n {
                let got = pass_at_k(PassKInput { n: n.into(), c: c.into(), k: k.into() }).map_err(|e| e.to_string())?;
                let want = pass_at_k_by_enumeration(n, c, k);
                ensure((got - want).abs() <= 1e-12, || format!("n={n} c={c} k={k}: {got} vs {want}"))?;
            }
        }
    }
    let spot = |n, c, k| pass_at_k(PassKInput { n, c, k }).unwrap();
    ensure(spot(4, 2, 1) == 0.5, || format!("(4,2,1) = {}", spot(4, 2, 1)))?;
    ensure((spot(5, 2, 3) - 0.9).abs() <= 1e-12, || format!("(5,2,3) = {}", spot(5, 2, 3)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Q(i64, i64);

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Q {
    fn new(n: i64, d: i64) -> Option<Q> {
        if d == 0 {
            return None;
        }
        let g = gcd(n, d).max(1) * d.signum();
        Some(Q(n / g, d / g))
    }
    fn add(self, o: Q) -> Option<Q> {
        Q::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    fn sub(self, o: Q) -> Option<Q> {
        Q::new(self.0 * o.1 - o.0 * self.1, self.1 * o.1)
    }
    fn mul(self, o: Q) -> Option<Q> {
        Q::new(self.0 * o.0, self.1 * o.1)
    }
    fn div(self, o: Q) -> Option<Q> {
        Q::new(self.0 * o.1, self.1 * o.0)
    }
}

fn reaches_24(values: &[Q]) -> bool {
    if values.len() == 1 {
        return values[0] == Q(24, 1);
    }
    for i in 0..values.len() {
        for j in 0..values.len() {
            if i == j {
                continue;
            }
            let rest: Vec<Q> = (0..values.len()).filter(|&t| t != i && t != j).map(|t| values[t]).collect();
            let (a, b) = (values[i], values[j]);
            for r in [a.add(b), a.sub(b), a.mul(b), a.div(b)].into_iter().flatten() {
                let mut next = rest.clone();
                next.push(r);
                if reaches_24(&next) {
                    return true;
                }
            }
        }
    }
    false
}

/// Recursive-descent evaluator over `+ - * /`, parentheses and integers.
struct Eval<'a> {
    s: &'a [u8],
    i: usize,
    leaves: Vec<i64>,
}

impl Eval<'_> {
    fn skip(&mut self) {
        while self.s.get(self.i) == Some(&b' ') {
            self.i += 1;
        }
    }
    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.s.get(self.i).copied()
    }
    fn expr(&mut self) -> Option<Q> {
        let mut v = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.i += 1;
            let r = self.term()?;
            v = if op == b'+' { v.add(r)? } else { v.sub(r)? };
        }
        Some(v)
    }
    fn term(&mut self) -> Option<Q> {
        let mut v = self.atom()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.i += 1;
            let r = self.atom()?;
            v = if op == b'*' { v.mul(r)? } else { v.div(r)? };
        }
        Some(v)
    }
    fn atom(&mut self) -> Option<Q> {
        match self.peek()? {
            b'(' => {
                self.i += 1;
                let v = self.expr()?;
                (self.peek()? == b')').then(|| self.i += 1)?;
                Some(v)
            }
            b'0'..=b'9' => {
                let start = self.i;
                while self.s.get(self.i).is_some_and(u8::is_ascii_digit) {
                    self.i += 1;
                }
                let n: i64 = std::str::from_utf8(&self.s[start..self.i]).ok()?.parse().ok()?;
                self.leaves.push(n);
                Some(Q(n, 1))
            }
            _ => None,
        }
    }
}

fn twenty_four_dual_oracle() -> Check {
    let instances = gen_24(2024, 500, false);
    ensure(instances.len() == 500, || "wrong instance count".into())?;
    let mut solvable = 0;
    for inst in &instances {
        let brute = reaches_24(&inst.numbers.map(|n| Q(n, 1)));
        ensure(inst.solvable == brute, || format!("{:?}: solver {} brute force {brute}", inst.numbers, inst.solvable))?;
        ensure(inst.witness.is_some() == inst.solvable, || format!("{:?}: witness mismatch", inst.numbers))?;
        if let Some(w) = &inst.witness {
            solvable += 1;
            let mut ev = Eval { s: w.as_bytes(), i: 0, leaves: Vec::new() };
            let value = ev.expr();
            ensure(ev.peek().is_none() && value == Some(Q(24, 1)), || format!("witness {w} = {value:?}"))?;
            let mut leaves = ev.leaves;
            let mut nums = inst.numbers.to_vec();
            leaves.sort_unstable();
            nums.sort_unstable();
            ensure(leaves == nums, || format!("witness {w} does not use {:?}", inst.numbers))?;
        }
    }
    ensure(solvable > 0 && solvable < 500, || format!("{solvable} solvable of 500"))?;
    let ones = rcf_core::synth::twenty_four::label([1, 1, 1, 1]).map_err(|e| e.to_string())?;
    let sixes = rcf_core::synth::twenty_four::label([6, 6, 6, 6]).map_err(|e| e.to_string())?;
    ensure(!ones.solvable && !reaches_24(&[Q(1, 1); 4]), || "{1,1,1,1} reported solvable".into())?;
    ensure(sixes.solvable && reaches_24(&[Q(6, 1); 4]), || "{6,6,6,6} reported unsolvable".into())
}

fn central_difference(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-5 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn close(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1.0)
}

fn calculus_soundness() -> Check {
    let points = sample_points();
    ensure(points.len() == 20, || "expected 20 sample points".into())?;
    for kind in [CalculusKind::Integrate, CalculusKind::Differentiate] {
        let tasks = gen_calculus(77, kind, 100).map_err(|e| e.to_string())?;
        ensure(tasks.len() == 100, || format!("{kind}: {} tasks", tasks.len()))?;
        for t in tasks {
            let stmt = parse_statement(&t.statement).map_err(|e| e.to_string())?;
            let reference = parse_reference(kind, &t.reference_answer).map_err(|e| e.to_string())?;
            for &x in &points {
                let (got, want) = match &stmt {
                    Statement::Integrate(integrand) => {
                        (central_difference(|v| reference.eval_at(VARIABLE, v), x), integrand.eval_at(VARIABLE, x))
                    }
                    Statement::Differentiate(f) => {
                        (reference.eval_at(VARIABLE, x), central_difference(|v| f.eval_at(VARIABLE, v), x))
                    }
                    other => return Err(format!("{kind} task parsed as {other:?}")),
                };
                ensure(close(got, want), || {
                    format!("{} / {} at x={x}: {got} vs {want}", t.statement, t.reference_answer)
                })?;
            }
        }
    }
    Ok(())
}

fn grading_fixture() -> Check {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/grade_vectors.jsonl");
    let file = File::open(path).map_err(|e| format!("{path}: {e}"))?;
    let vectors = load_grade_vectors(BufReader::new(file)).map_err(|e| e.to_string())?;
    ensure(vectors.len() >= 20, || format!("only {} vectors", vectors.len()))?;
    let notes: HashSet<&str> = vectors.iter().map(|v| v.note.as_str()).collect();
    for needed in ["decimal vs latex fraction", "nested braces exact", "no box is incorrect"] {
        ensure(notes.contains(needed), || format!("fixture lacks `{needed}`"))?;
    }
    for v in &vectors {
        let got = grade(&v.completion, &v.reference).is_correct();
        ensure(got == v.expected, || format!("{}: got {got}", v.note))?;
    }
    Ok(())
}

/// (trace, correct); counts worked out by hand below.
const STATS_FIXTURE: [(&str, bool); 10] = [
    ("a b c", true),
    ("Wait, wait. Wait!", true),
    ("one two three four five six seven eight nine ten", true),
    ("wait here", true),
    ("awaiting waiter wait", true),
    ("x", false),
    ("WAIT wait Wait wait", false),
    ("hmm wait, let me think wait", false),
    ("no waits here at all", false),
    ("wait", false),
];

async fn trace_stats_fixture(client: &RcfClient) -> Check {
    let req = StatsRequest {
        traces: STATS_FIXTURE.iter().map(|t| t.0.to_string()).collect(),
        verdicts: STATS_FIXTURE.iter().map(|t| t.1).collect(),
        options: StatsOptions::default(),
    };
    let stats = client.eval_stats(&req).await.map_err(|e| e.to_string())?;
    // correct: lengths 3 3 10 2 3, waits 0 3 0 1 1
    let correct = SplitStats {
        count: 5,
        longest: 10,
        shortest: 2,
        average: 4.2,
        most_wait: 3,
        least_wait: 0,
        average_wait: 1.0,
    };
    // wrong: lengths 1 4 6 5 1, waits 0 4 2 0 1
    let wrong = SplitStats {
        count: 5,
        longest: 6,
        shortest: 1,
        average: 3.4,
        most_wait: 4,
        least_wait: 0,
        average_wait: 1.4,
    };
    ensure(stats.correct.as_ref() == Some(&correct), || format!("correct split {:?}", stats.correct))?;
    ensure(stats.wrong.as_ref() == Some(&wrong), || format!("wrong split {:?}", stats.wrong))?;
    let insensitive = count_keyword("Wait, wait. Wait!", "wait", false);
    let sensitive = count_keyword("Wait, wait. Wait!", "wait", true);
    ensure((insensitive, sensitive) == (3, 1), || format!("wait counts {insensitive}/{sensitive}"))
}

fn bench_item(id: &str, answer: &str) -> BenchmarkItem {
    BenchmarkItem {
        id: id.into(),
        problem: format!("Problem {id}: find the value."),
        answer: answer.into(),
        source: "toy".into(),
    }
}

fn mock_script() -> String {
    let rule = |id: &str, reply: &str| {
        MockRule::new(
            Matcher { contains: Some(format!("Problem {id}:")), ..Matcher::default() },
            vec![MockReply::content(reply)],
        )
    };
    let script = MockScript {
        rules: vec![
            rule("p1", "<think>\nadd them</think>The answer is \\boxed{7}."),
            rule("p2", "<think>\nhalve it</think>\\boxed{\\frac{1}{2}}"),
            rule("p3", "<think>\nguess</think>\\boxed{100}"),
        ],
        fallback: vec![MockReply::content("<think>\nno idea</think>")],
        ..MockScript::default()
    };
    serde_json::to_string_pretty(&script).unwrap()
}

async fn end_to_end(client: &RcfClient) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let script_path = dir.path().join("script.json");
    std::fs::write(&script_path, mock_script()).map_err(|e| e.to_string())?;
    let mock = MockServer::start(MockScript::load(&script_path).map_err(|e| e.to_string())?)
        .await
        .map_err(|e| e.to_string())?;

    let items = vec![bench_item("p1", "7"), bench_item("p2", "0.5"), bench_item("p3", "3"), bench_item("p4", "9")];
    let mut endpoint = EndpointConfig::new(mock.base_url(), "mock");
    endpoint.api_key_env = None;
    let mut req = EvalRequest {
        benchmark: "toy".into(),
        items: items.clone(),
        endpoint,
        conditions: vec![AblationCondition::NoControl],
        sampling: SamplingParams::new(1, 1),
        exclude_failed: false,
        stats: StatsOptions::default(),
        run_dir: None,
    };
    let report = client.eval_run(&req).await.map_err(|e| e.to_string())?;
    ensure(report.aggregate() == Some(0.5), || format!("aggregate {:?}", report.aggregate()))?;

    let before = mock.requests().len();
    req.conditions = AblationCondition::standard_matrix();
    let report = client.eval_ablate(&req).await.map_err(|e| e.to_string())?;
    let labels: Vec<&str> = report.conditions.iter().map(|c| c.label.as_str()).collect();
    ensure(labels.len() == 4, || format!("conditions {labels:?}"))?;
    let prompts: Vec<String> = mock.requests()[before..]
        .iter()
        .filter_map(|r| r.user_content())
        .filter(|u| u.contains("Problem p1:"))
        .collect();
    let distinct: HashSet<&String> = prompts.iter().collect();
    ensure(prompts.len() == 4 && distinct.len() == 4, || format!("{} prompts, {} distinct", prompts.len(), distinct.len()))?;
    let bare: Vec<&String> = prompts.iter().filter(|p| !p.contains("<control>")).collect();
    ensure(bare.len() == 1, || format!("{} prompts without a control span", bare.len()))?;
    let expected_bare = rcf_core::harness::user_content(&items[0].problem, &AblationCondition::NoControl);
    ensure(*bare[0] == expected_bare, || format!("no_control prompt {:?}", bare[0]))?;
    let table = client.report(&serde_json::to_string(&report).unwrap()).await.map_err(|e| e.to_string())?;
    for label in ["no_control", "uniform(0)", "uniform(5)", "uniform(9)"] {
        ensure(table.contains(label), || format!("table lacks {label}:\n{table}"))?;
    }
    Ok(())
}

fn simulator_monotonicity() -> Check {
    let config = SweepConfig { seeds: 200, ..SweepConfig::default() };
    let base = [5u8; 5];
    let at = |t: &rcf_core::sim::SweepTable, v: u8| t.rows.iter().find(|r| r.value == v).cloned().unwrap();

    let depth = sweep(Field::SearchDepth, &config, base).map_err(|e| e.to_string())?;
    let (d0, d9) = (at(&depth, 0).mean_max_depth, at(&depth, 9).mean_max_depth);
    ensure(d9 > d0, || format!("depth {d0} -> {d9}"))?;

    let breadth = sweep(Field::SearchBreadth, &config, base).map_err(|e| e.to_string())?;
    let (b0, b9) = (at(&breadth, 0).mean_branches, at(&breadth, 9).mean_branches);
    ensure(b9 > b0, || format!("branches {b0} -> {b9}"))?;

    let traps = SweepConfig { trap_rate: 0.3, ..config };
    let mut detect9 = base;
    detect9[Field::ErrorDetection.index()] = 9;
    let correction = sweep(Field::ErrorCorrection, &traps, detect9).map_err(|e| e.to_string())?;
    let (c0, c9) = (at(&correction, 0).clean_goal_rate, at(&correction, 9).clean_goal_rate);
    ensure(c9 > c0, || format!("clean goal rate {c0} -> {c9}"))
}

fn annotated(query: &str, trace: &str, idx: u32, fields: ControlFields) -> AnnotatedSample {
    AnnotatedSample {
        query_id: query.into(),
        query: format!("Question {query}?"),
        trace: trace.into(),
        annotation: AnnotationRecord::new(fields, "scored by hand").unwrap(),
        source: Subset::Main,
        sample_index: idx,
        graded_correct: true,
    }
}

async fn dataset_conflicts(client: &RcfClient) -> Check {
    let same = ControlFields::new(EXAMPLE_SCORES).unwrap();
    let clash = vec![
        annotated("q1", "first trace \\boxed{1}", 0, same),
        annotated("q1", "second trace \\boxed{1}", 1, same),
    ];
    match client.dataset_build(&rcf_core::api::BuildRequest { samples: clash }).await {
        Err(e) if e.kind() == Some("conflict_without_control") => {}
        other => return Err(format!("collision not rejected: {other:?}")),
    }

    let mut samples = Vec::new();
    for q in 0..6u32 {
        for i in 0..3u32 {
            let scores: [u8; 11] = std::array::from_fn(|f| ((q * 7 + i * 3 + f as u32) % 10) as u8);
            let fields = ControlFields::new(scores).unwrap();
            samples.push(annotated(&format!("q{q}"), &format!("trace {q}.{i} \\boxed{{{i}}}"), i, fields));
        }
    }
    let records = client
        .dataset_build(&rcf_core::api::BuildRequest { samples: samples.clone() })
        .await
        .map_err(|e| e.to_string())?;
    ensure(records.len() == samples.len(), || format!("{} records from {}", records.len(), samples.len()))?;
    for r in &records {
        check_record(r, &samples)?;
    }
    Ok(())
}

fn check_record(r: &TrainingRecord, samples: &[AnnotatedSample]) -> Check {
    let user = r.user().map_err(|e| e.to_string())?;
    let parsed = parse_control_string(user).map_err(|e| e.to_string())?;
    let source = samples
        .iter()
        .find(|s| s.query_id == r.metadata.query_id && s.sample_index == r.metadata.sample_index)
        .ok_or("record without a source sample")?;
    let fields = *source.annotation.fields();
    ensure(parsed == fields && r.metadata.scores == fields, || format!("{}: scores differ", r.metadata.query_id))?;
    let span = serialize_control_string(&fields);
    ensure(user == format!("{}{span}", source.query), || format!("user message {user:?}"))?;
    ensure(r.assistant().map_err(|e| e.to_string())? == source.trace, || "assistant message differs".into())
}

async fn start_service() -> RcfClient {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, rcf_server::app()).await.unwrap() });
    RcfClient::new(format!("http://{addr}"))
}

#[tokio::main]
async fn main() {
    let client = start_service().await;
    let mut suite = Suite { failed: 0 };
    let s = Duration::from_secs;

    suite.run("control-string fidelity", s(1), control_string_fidelity);
    suite.run("pass@k oracle equivalence", s(1), pass_at_k_oracle);
    suite.run("24-game dual-oracle agreement", s(30), twenty_four_dual_oracle);
    suite.run("calculus construction soundness", s(30), calculus_soundness);
    suite.run("grading fixture suite", s(5), grading_fixture);
    suite.run_async("trace-stats fixture", s(5), trace_stats_fixture(&client)).await;
    suite.run_async("end-to-end hermetic eval", s(30), end_to_end(&client)).await;
    suite.run("simulator monotonicity", s(60), simulator_monotonicity);
    suite.run_async("dataset conflict detection", s(5), dataset_conflicts(&client)).await;

    if suite.failed > 0 {
        println!("{} criteria failed", suite.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
