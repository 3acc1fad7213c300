//! A seeded tree-search environment. The five execution scores drive a
//! search policy over a synthetic tree; the six quality scores are computed
//! from the resulting episode.
//!
//! | field              | meaning in the simulator                                        |
//! |--------------------|-----------------------------------------------------------------|
//! | search_depth s     | nodes deeper than `1 + s` are never expanded                     |
//! | search_breadth s   | at most `1 + s` children of a node are queued                    |
//! | error_detection s  | a visited trap is noticed with probability `s / 9`               |
//! | error_correction s | a noticed trap is discarded with probability `s / 9`             |
//! | strategy_switching | at a dead end, DFS and BFS are swapped with probability `s / 9`  |
//! | correctness        | `9 * goal_found * (1 - corrupted)`                               |
//! | efficiency         | `9 * min(1, depth / actions)`, 0 for an empty episode            |
//! | completeness       | `9 * goal-path nodes visited / (depth + 1)`, root included       |
//! | coherence          | `9 * valid transitions / transitions`, 9 for an empty episode    |
//! | knowledge_accuracy | `9 * (1 - unnoticed traps / visited traps)`, 9 with no traps    |
//! | clarity_of_steps   | `9 * well-formed lines / lines` of [`render_trace`]              |
//!
//! Quality ratios are rounded to the nearest integer.
//!
//! A visited trap corrupts the episode unless it is noticed and discarded
//! immediately. Corruption is sticky: every later transition is invalid.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rcf::{ControlFields, Field, MAX_SCORE};

/// Upper bound on generated tree size.
pub const MAX_NODES: usize = 4_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("episode does not belong to this tree: {0}")]
    EpisodeTreeMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub depth: u32,
    pub children: Vec<usize>,
    pub trap: bool,
}

/// A full `branching`-ary tree of height `depth`, nodes numbered in
/// breadth-first order from the root `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub seed: u64,
    pub depth: u32,
    pub branching: u32,
    pub trap_rate: f64,
    pub nodes: Vec<TreeNode>,
    pub goal: usize,
}

pub fn node_count(depth: u32, branching: u32) -> Option<usize> {
    let mut total: usize = 0;
    let mut level: usize = 1;
    for d in 0..=depth {
        total = total.checked_add(level)?;
        if d < depth {
            level = level.checked_mul(branching as usize)?;
        }
    }
    Some(total)
}

pub fn gen_tree(seed: u64, depth: u32, branching: u32, trap_rate: f64) -> Result<SearchTree, SimError> {
    if depth < 1 {
        return Err(SimError::InvalidParams("depth must be >= 1".into()));
    }
    if branching < 2 {
        return Err(SimError::InvalidParams("branching must be >= 2".into()));
    }
    if !(0.0..1.0).contains(&trap_rate) {
        return Err(SimError::InvalidParams(format!("trap_rate {trap_rate} not in [0, 1)")));
    }
    let total = node_count(depth, branching)
        .filter(|&n| n <= MAX_NODES)
        .ok_or_else(|| SimError::InvalidParams(format!("tree larger than {MAX_NODES} nodes")))?;

    let mut nodes = Vec::with_capacity(total);
    nodes.push(TreeNode { parent: None, depth: 0, children: Vec::new(), trap: false });
    let mut i = 0;
    while nodes.len() < total {
        let d = nodes[i].depth;
        for _ in 0..branching {
            let id = nodes.len();
            nodes[i].children.push(id);
            nodes.push(TreeNode { parent: Some(i), depth: d + 1, children: Vec::new(), trap: false });
        }
        i += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves = (total - (branching as usize).pow(depth))..total;
    let goal = rng.random_range(leaves);
    let mut tree = SearchTree { seed, depth, branching, trap_rate, nodes, goal };
    let on_path: HashSet<usize> = tree.path_to(goal).into_iter().collect();
    for id in 1..total {
        let trap = rng.random_bool(trap_rate);
        tree.nodes[id].trap = trap && !on_path.contains(&id);
    }
    Ok(tree)
}

impl SearchTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.nodes.get(id).and_then(|n| n.parent)
    }

    pub fn is_trap(&self, id: usize) -> bool {
        self.nodes.get(id).is_some_and(|n| n.trap)
    }

    /// Root-to-`id` node ids.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn goal_path(&self) -> Vec<usize> {
        self.path_to(self.goal)
    }

    pub fn trap_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.trap).count()
    }

    pub fn step_cap(&self) -> usize {
        4 * self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub depth_budget: u32,
    pub beam_width: u32,
    pub detect_prob: f64,
    pub correct_prob: f64,
    pub switch_prob: f64,
}

impl PolicyParams {
    pub fn from_scores(execution: [u8; 5]) -> Result<Self, SimError> {
        if let Some(bad) = execution.iter().find(|&&s| s > MAX_SCORE) {
            return Err(SimError::InvalidParams(format!("score {bad} > {MAX_SCORE}")));
        }
        let p = |s: u8| f64::from(s) / f64::from(MAX_SCORE);
        Ok(PolicyParams {
            depth_budget: 1 + u32::from(execution[0]),
            beam_width: 1 + u32::from(execution[1]),
            detect_prob: p(execution[2]),
            correct_prob: p(execution[3]),
            switch_prob: p(execution[4]),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    DepthFirst,
    BreadthFirst,
}

impl Mode {
    fn toggled(self) -> Self {
        match self {
            Mode::DepthFirst => Mode::BreadthFirst,
            Mode::BreadthFirst => Mode::DepthFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Move from `from` to its child `node`.
    Expand,
    /// Jump back from `from` to the previously visited `node`.
    Backtrack,
    /// Notice that `node` is a trap.
    Detect,
    /// Discard `node` and its subtree.
    Correct,
    /// Swap traversal order; `mode` holds the new order.
    Switch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    pub from: usize,
    pub node: usize,
    pub depth: u32,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    GoalFound,
    /// Nothing left to explore within the budgets.
    Exhausted,
    StepCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchEpisode {
    pub tree_seed: u64,
    pub node_count: usize,
    pub policy_seed: u64,
    pub execution: [u8; 5],
    pub steps: Vec<Step>,
    pub status: Terminal,
    pub corrupted: bool,
}

impl SearchEpisode {
    pub fn goal_found(&self) -> bool {
        self.status == Terminal::GoalFound
    }

    pub fn action_count(&self, action: Action) -> usize {
        self.steps.iter().filter(|s| s.action == action).count()
    }

    pub fn max_depth(&self) -> u32 {
        self.steps
            .iter()
            .filter(|s| s.action == Action::Expand)
            .map(|s| s.depth)
            .max()
            .unwrap_or(0)
    }

    /// Distinct depth-1 nodes entered.
    pub fn branches_visited(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.action == Action::Expand && s.depth == 1)
            .map(|s| s.node)
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn solved_cleanly(&self) -> bool {
        self.goal_found() && !self.corrupted
    }
}

struct Runner<'a> {
    tree: &'a SearchTree,
    steps: Vec<Step>,
    current: usize,
    mode: Mode,
    cap: usize,
}

impl Runner<'_> {
    /// `false` once the step cap is hit.
    fn push(&mut self, action: Action, node: usize) -> bool {
        if self.steps.len() >= self.cap {
            return false;
        }
        self.steps.push(Step {
            action,
            from: self.current,
            node,
            depth: self.tree.nodes[node].depth,
            mode: self.mode,
        });
        self.current = node;
        true
    }
}

/// Runs the policy until the goal is reached, the frontier empties, or the
/// step cap is hit.
pub fn run_policy(tree: &SearchTree, execution: [u8; 5], seed: u64) -> Result<SearchEpisode, SimError> {
    let params = PolicyParams::from_scores(execution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = Runner { tree, steps: Vec::new(), current: 0, mode: Mode::DepthFirst, cap: tree.step_cap() };
    let mut frontier: VecDeque<usize> = VecDeque::new();
    let mut corrupted = false;

    queue_children(tree, 0, &params, run.mode, &mut frontier, &mut rng);
    let status = loop {
        let next = match run.mode {
            Mode::DepthFirst => frontier.pop_back(),
            Mode::BreadthFirst => frontier.pop_front(),
        };
        let Some(next) = next else { break Terminal::Exhausted };
        let parent = tree.parent(next).expect("queued nodes are never the root");
        if parent != run.current && !run.push(Action::Backtrack, parent) {
            break Terminal::StepCap;
        }
        if !run.push(Action::Expand, next) {
            break Terminal::StepCap;
        }
        if next == tree.goal {
            break Terminal::GoalFound;
        }
        let mut discarded = false;
        if tree.is_trap(next) {
            if rng.random_bool(params.detect_prob) {
                if !run.push(Action::Detect, next) {
                    break Terminal::StepCap;
                }
                if rng.random_bool(params.correct_prob) {
                    if !run.push(Action::Correct, next) {
                        break Terminal::StepCap;
                    }
                    discarded = true;
                }
            }
            corrupted |= !discarded;
        }
        let queued = if discarded {
            0
        } else {
            queue_children(tree, next, &params, run.mode, &mut frontier, &mut rng)
        };
        if queued == 0 && rng.random_bool(params.switch_prob) {
            run.mode = run.mode.toggled();
            if !run.push(Action::Switch, next) {
                break Terminal::StepCap;
            }
        }
    };

    Ok(SearchEpisode {
        tree_seed: tree.seed,
        node_count: tree.len(),
        policy_seed: seed,
        execution,
        steps: run.steps,
        status,
        corrupted,
    })
}

/// Queues up to `beam_width` randomly chosen children so the lowest id is
/// taken first under the current mode.
fn queue_children(
    tree: &SearchTree,
    node: usize,
    params: &PolicyParams,
    mode: Mode,
    frontier: &mut VecDeque<usize>,
    rng: &mut ChaCha8Rng,
) -> usize {
    let n = &tree.nodes[node];
    if n.children.is_empty() || n.depth >= params.depth_budget {
        return 0;
    }
    let mut chosen: Vec<usize> = n
        .children
        .choose_multiple(rng, params.beam_width as usize)
        .copied()
        .collect();
    chosen.sort_unstable();
    match mode {
        Mode::DepthFirst => frontier.extend(chosen.iter().rev()),
        Mode::BreadthFirst => frontier.extend(chosen.iter()),
    }
    chosen.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityScores {
    pub correctness: u8,
    pub efficiency: u8,
    pub completeness: u8,
    pub coherence: u8,
    pub knowledge_accuracy: u8,
    pub clarity_of_steps: u8,
}

impl QualityScores {
    pub fn to_array(self) -> [u8; 6] {
        [
            self.correctness,
            self.efficiency,
            self.completeness,
            self.coherence,
            self.knowledge_accuracy,
            self.clarity_of_steps,
        ]
    }
}

fn scaled(num: usize, den: usize) -> u8 {
    let r = (9.0 * num as f64 / den as f64).round();
    r.clamp(0.0, 9.0) as u8
}

/// Index of the first step taken while corrupted, if any.
fn corruption_start(tree: &SearchTree, steps: &[Step]) -> Option<usize> {
    for (i, s) in steps.iter().enumerate() {
        if s.action != Action::Expand || !tree.is_trap(s.node) {
            continue;
        }
        let at = |j: usize, a: Action| steps.get(j).is_some_and(|t| t.action == a && t.node == s.node);
        if !at(i + 1, Action::Detect) {
            return Some(i + 1);
        }
        if !at(i + 2, Action::Correct) {
            return Some(i + 2);
        }
    }
    None
}

fn check_episode(tree: &SearchTree, episode: &SearchEpisode) -> Result<(), SimError> {
    if episode.node_count != tree.len() || episode.tree_seed != tree.seed {
        return Err(SimError::EpisodeTreeMismatch(format!(
            "episode was run on tree seed {} with {} nodes",
            episode.tree_seed, episode.node_count
        )));
    }
    if let Some(s) = episode.steps.iter().find(|s| s.node >= tree.len() || s.from >= tree.len()) {
        return Err(SimError::EpisodeTreeMismatch(format!("node {} out of range", s.node.max(s.from))));
    }
    if episode.goal_found() && episode.steps.last().map(|s| s.node) != Some(tree.goal) {
        return Err(SimError::EpisodeTreeMismatch("goal status without reaching the goal".into()));
    }
    Ok(())
}

pub fn score_episode(tree: &SearchTree, episode: &SearchEpisode) -> Result<QualityScores, SimError> {
    check_episode(tree, episode)?;
    let steps = &episode.steps;
    let corrupt_from = corruption_start(tree, steps);
    let corrupted = corrupt_from.is_some();

    let correctness = if episode.goal_found() && !corrupted { 9 } else { 0 };

    let efficiency = if steps.is_empty() {
        0
    } else {
        scaled(tree.depth as usize, steps.len()).min(9)
    };

    let mut visited: HashSet<usize> = HashSet::from([0]);
    let mut current = 0;
    let mut valid = 0;
    for (i, s) in steps.iter().enumerate() {
        let clean = corrupt_from.is_none_or(|c| i < c);
        let ok = match s.action {
            Action::Expand => s.from == current && tree.parent(s.node) == Some(current),
            Action::Backtrack => s.from == current && visited.contains(&s.node),
            Action::Detect | Action::Correct | Action::Switch => s.node == current && s.from == current,
        };
        if ok && clean {
            valid += 1;
        }
        current = s.node;
        visited.insert(s.node);
    }
    let coherence = if steps.is_empty() { 9 } else { scaled(valid, steps.len()) };

    let path = tree.goal_path();
    let on_path = path.iter().filter(|n| visited.contains(n)).count();
    let completeness = scaled(on_path, path.len());

    let mut traps_visited = 0;
    let mut unnoticed = 0;
    for (i, s) in steps.iter().enumerate() {
        if s.action == Action::Expand && tree.is_trap(s.node) {
            traps_visited += 1;
            let noticed = steps
                .get(i + 1)
                .is_some_and(|t| t.action == Action::Detect && t.node == s.node);
            if !noticed {
                unnoticed += 1;
            }
        }
    }
    let knowledge_accuracy = if traps_visited == 0 {
        9
    } else {
        scaled(traps_visited - unnoticed, traps_visited)
    };

    let lines = line_wellformedness(episode);
    let good = lines.iter().filter(|&&ok| ok).count();
    let clarity_of_steps = scaled(good, lines.len());

    Ok(QualityScores {
        correctness,
        efficiency,
        completeness,
        coherence,
        knowledge_accuracy,
        clarity_of_steps,
    })
}

/// One flag per rendered line: start line, one per step, closing line.
fn line_wellformedness(episode: &SearchEpisode) -> Vec<bool> {
    let steps = &episode.steps;
    let mut flags = vec![true];
    for (i, s) in steps.iter().enumerate() {
        let ok = match s.action {
            Action::Detect => steps
                .get(i + 1)
                .is_some_and(|t| t.action == Action::Correct && t.node == s.node),
            Action::Switch => steps[i + 1..]
                .iter()
                .take_while(|t| t.action != Action::Switch)
                .any(|t| t.action == Action::Expand),
            _ => true,
        };
        flags.push(ok);
    }
    flags.push(true);
    flags
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::DepthFirst => "depth-first",
        Mode::BreadthFirst => "breadth-first",
    }
}

/// Deterministic text rendering, one line per step plus an opening and a
/// closing line. Backtrack lines start with `Wait,`; a found goal is boxed.
pub fn render_trace(episode: &SearchEpisode) -> String {
    let mut out = String::from("Start at node 0 (depth 0).\n");
    for s in &episode.steps {
        let _ = match s.action {
            Action::Expand => writeln!(out, "Expand node {} (depth {}) from node {}.", s.node, s.depth, s.from),
            Action::Backtrack => writeln!(out, "Wait, go back to node {} (depth {}) from node {}.", s.node, s.depth, s.from),
            Action::Detect => writeln!(out, "Check node {} (depth {}): this step is wrong.", s.node, s.depth),
            Action::Correct => writeln!(out, "Discard node {} (depth {}) and its branch.", s.node, s.depth),
            Action::Switch => writeln!(out, "Switch to {} search at node {} (depth {}).", mode_name(s.mode), s.node, s.depth),
        };
    }
    let last = episode.steps.last().map_or(0, |s| s.node);
    let _ = match episode.status {
        Terminal::GoalFound => writeln!(out, "Reached the goal. The answer is \\boxed{{{last}}}."),
        Terminal::Exhausted => writeln!(out, "No branches left to explore."),
        Terminal::StepCap => writeln!(out, "Step limit reached."),
    };
    out
}

/// Deepest `(depth N)` mentioned in a rendered trace.
pub fn rendered_max_depth(text: &str) -> Option<u32> {
    let re = Regex::new(r"\(depth (\d+)\)").expect("static pattern");
    re.captures_iter(text).filter_map(|c| c[1].parse().ok()).max()
}

/// Execution scores of the policy plus quality scores of the episode.
pub fn episode_fields(episode: &SearchEpisode, quality: QualityScores) -> ControlFields {
    ControlFields::from_parts(episode.execution, quality.to_array()).expect("all scores are in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub seeds: u64,
    pub depth: u32,
    pub branching: u32,
    pub trap_rate: f64,
    /// Fixed value for the fields not being swept.
    pub base_score: u8,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { seeds: 200, depth: 6, branching: 4, trap_rate: 0.1, base_score: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: u8,
    pub episodes: u64,
    pub mean_max_depth: f64,
    pub mean_branches: f64,
    pub goal_rate: f64,
    pub clean_goal_rate: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub field: Field,
    pub config: SweepConfig,
    /// Scores of the other execution fields.
    pub fixed: [u8; 5],
    pub rows: Vec<SweepRow>,
}

/// Varies one execution field over `0..=9`. Seed `i` builds tree `i` and
/// drives the policy with the same seed, so all rows share trees.
pub fn sweep(field: Field, config: &SweepConfig, fixed: [u8; 5]) -> Result<SweepTable, SimError> {
    if !field.is_execution() {
        return Err(SimError::InvalidParams(format!("{} is not an execution field", field.key())));
    }
    if config.seeds == 0 {
        return Err(SimError::InvalidParams("seeds must be >= 1".into()));
    }
    let trees: Vec<SearchTree> = (0..config.seeds)
        .map(|s| gen_tree(s, config.depth, config.branching, config.trap_rate))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(10);
    for value in 0..=MAX_SCORE {
        let mut scores = fixed;
        scores[field.index()] = value;
        let (mut depth, mut branches, mut goals, mut clean, mut steps) = (0u64, 0u64, 0u64, 0u64, 0u64);
        for tree in &trees {
            let ep = run_policy(tree, scores, tree.seed)?;
            depth += u64::from(ep.max_depth());
            branches += ep.branches_visited() as u64;
            goals += u64::from(ep.goal_found());
            clean += u64::from(ep.solved_cleanly());
            steps += ep.steps.len() as u64;
        }
        let n = config.seeds as f64;
        rows.push(SweepRow {
            value,
            episodes: config.seeds,
            mean_max_depth: depth as f64 / n,
            mean_branches: branches as f64 / n,
            goal_rate: goals as f64 / n,
            clean_goal_rate: clean as f64 / n,
            mean_steps: steps as f64 / n,
        });
    }
    Ok(SweepTable { field, config: *config, fixed, rows })
}

/// The three standard sweeps: depth and breadth with everything else at the
/// base score, and correction with detection pinned at 9 under a higher
/// trap rate.
pub fn standard_sweeps(config: &SweepConfig, correction_trap_rate: f64) -> Result<Vec<SweepTable>, SimError> {
    let base = [config.base_score; 5];
    let mut detect9 = base;
    detect9[Field::ErrorDetection.index()] = MAX_SCORE;
    let trap_cfg = SweepConfig { trap_rate: correction_trap_rate, ..*config };
    Ok(vec![
        sweep(Field::SearchDepth, config, base)?,
        sweep(Field::SearchBreadth, config, base)?,
        sweep(Field::ErrorCorrection, &trap_cfg, detect9)?,
    ])
}

pub fn render_sweep_table(table: &SweepTable) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "sweep {} (seeds={}, depth={}, branching={}, trap_rate={}, fixed={:?})",
        table.field.key(),
        table.config.seeds,
        table.config.depth,
        table.config.branching,
        table.config.trap_rate,
        table.fixed
    );
    let _ = writeln!(
        out,
        "{:>5} | {:>9} | {:>8} | {:>9} | {:>10} | {:>9}",
        "value", "max_depth", "branches", "goal_rate", "clean_rate", "steps"
    );
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{:>5} | {:>9.3} | {:>8.3} | {:>9.3} | {:>10.3} | {:>9.1}",
            r.value, r.mean_max_depth, r.mean_branches, r.goal_rate, r.clean_goal_rate, r.mean_steps
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::count_keyword;

    #[test]
    fn tree_shape_and_determinism() {
        let a = gen_tree(1, 3, 2, 0.2).unwrap();
        assert_eq!(a.len(), 15);
        assert_eq!(a, gen_tree(1, 3, 2, 0.2).unwrap());
        assert_eq!(node_count(6, 4), Some(5461));
        assert!(!a.nodes[0].trap);
        for id in a.goal_path() {
            assert!(!a.is_trap(id));
        }
        assert_eq!(gen_tree(3, 4, 3, 0.0).unwrap().trap_count(), 0);
    }

    #[test]
    fn invalid_tree_params() {
        assert!(gen_tree(0, 0, 2, 0.0).is_err());
        assert!(gen_tree(0, 2, 1, 0.0).is_err());
        assert!(gen_tree(0, 2, 2, 1.0).is_err());
        assert!(gen_tree(0, 40, 10, 0.0).is_err());
    }

    #[test]
    fn goal_at_requested_depth() {
        for seed in 0..100 {
            let t = gen_tree(seed, 4, 3, 0.1).unwrap();
            assert_eq!(t.nodes[t.goal].depth, 4);
            assert!(t.nodes[t.goal].children.is_empty());
        }
    }

    #[test]
    fn full_budget_always_finds_goal() {
        for seed in 0..100 {
            let t = gen_tree(seed, 4, 3, 0.0).unwrap();
            let ep = run_policy(&t, [9; 5], seed).unwrap();
            assert!(ep.solved_cleanly(), "seed {seed}");
            assert!(ep.steps.len() <= t.step_cap());
        }
    }

    #[test]
    fn shallow_budget_never_finds_deep_goal() {
        for seed in 0..20 {
            let t = gen_tree(seed, 5, 2, 0.1).unwrap();
            let ep = run_policy(&t, [0, 9, 5, 5, 5], seed).unwrap();
            assert!(!ep.goal_found());
            assert!(ep.max_depth() <= 1);
        }
    }

    #[test]
    fn policy_is_deterministic() {
        let t = gen_tree(5, 5, 3, 0.3).unwrap();
        assert_eq!(run_policy(&t, [5; 5], 11).unwrap(), run_policy(&t, [5; 5], 11).unwrap());
    }

    fn straight_episode(t: &SearchTree) -> SearchEpisode {
        let path = t.goal_path();
        let steps = path
            .windows(2)
            .map(|w| Step { action: Action::Expand, from: w[0], node: w[1], depth: t.nodes[w[1]].depth, mode: Mode::DepthFirst })
            .collect();
        SearchEpisode {
            tree_seed: t.seed,
            node_count: t.len(),
            policy_seed: 0,
            execution: [9; 5],
            steps,
            status: Terminal::GoalFound,
            corrupted: false,
        }
    }

    #[test]
    fn optimal_path_scores_nine() {
        let t = gen_tree(2, 3, 2, 0.3).unwrap();
        let ep = straight_episode(&t);
        let q = score_episode(&t, &ep).unwrap();
        assert_eq!(q.to_array(), [9; 6]);
        assert_eq!(count_keyword(&render_trace(&ep), "wait", false), 0);
        assert!(render_trace(&ep).contains(&format!("\\boxed{{{}}}", t.goal)));
    }

    #[test]
    fn degenerate_episode() {
        let t = gen_tree(2, 3, 2, 0.0).unwrap();
        let ep = SearchEpisode { steps: vec![], status: Terminal::Exhausted, ..straight_episode(&t) };
        let q = score_episode(&t, &ep).unwrap();
        assert_eq!(q.correctness, 0);
        assert_eq!(q.efficiency, 0);
        assert_eq!(q.completeness, 2);
    }

    #[test]
    fn mismatched_tree_is_rejected() {
        let t = gen_tree(2, 3, 2, 0.0).unwrap();
        let other = gen_tree(3, 3, 2, 0.0).unwrap();
        let ep = straight_episode(&t);
        assert!(matches!(score_episode(&other, &ep), Err(SimError::EpisodeTreeMismatch(_))));
    }

    #[test]
    fn backtracks_render_as_wait_lines() {
        let t = gen_tree(4, 5, 3, 0.2).unwrap();
        for seed in 0..30 {
            let ep = run_policy(&t, [6, 4, 5, 5, 5], seed).unwrap();
            let text = render_trace(&ep);
            assert_eq!(count_keyword(&text, "wait", false), ep.action_count(Action::Backtrack));
            assert_eq!(text.lines().count(), ep.steps.len() + 2);
            assert_eq!(rendered_max_depth(&text), Some(ep.max_depth().max(ep.steps.iter().map(|s| s.depth).max().unwrap_or(0))));
        }
    }

    #[test]
    fn policy_corruption_matches_scoring() {
        for seed in 0..50 {
            let t = gen_tree(seed, 4, 3, 0.3).unwrap();
            let ep = run_policy(&t, [5; 5], seed).unwrap();
            assert_eq!(corruption_start(&t, &ep.steps).is_some(), ep.corrupted);
            let q = score_episode(&t, &ep).unwrap();
            assert_eq!(q.correctness == 9, ep.solved_cleanly());
        }
    }

    #[test]
    fn fields_round_trip_through_control_string() {
        let t = gen_tree(8, 3, 3, 0.2).unwrap();
        let ep = run_policy(&t, [3, 1, 4, 1, 5], 2).unwrap();
        let f = episode_fields(&ep, score_episode(&t, &ep).unwrap());
        assert_eq!(crate::rcf::parse_control_string(&f.to_control_string()).unwrap(), f);
        assert_eq!(f.execution(), [3, 1, 4, 1, 5]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn scores_bounded(seed in 0u64..1000, exec in proptest::array::uniform5(0u8..=9), trap in 0.0f64..0.6) {
                let t = gen_tree(seed, 4, 3, trap).unwrap();
                let ep = run_policy(&t, exec, seed ^ 0x5eed).unwrap();
                prop_assert!(ep.steps.len() <= t.step_cap());
                let q = score_episode(&t, &ep).unwrap();
                prop_assert!(q.to_array().iter().all(|&s| s <= 9));
                if q.correctness == 9 {
                    prop_assert!(ep.goal_found());
                }
                prop_assert_eq!(&run_policy(&t, exec, seed ^ 0x5eed).unwrap(), &ep);
            }
        }
    }
}
