//! Records written by the distillation trainer and their rendering.
//!
//! Each line of a training log is one JSON object tagged by `kind`:
//!
//! ```text
//! {"kind":"loss","run":"cond","step":10,"split":"train","loss":2.31}
//! {"kind":"steering","run":"cond","field":"search_depth","value":9,"metric":"mean_depth","samples":100,"mean":4.2}
//! {"kind":"conflict","run":"cond","pairs":120,"own_preferred":81}
//! {"kind":"grad_check","run":"micro","params":10,"max_rel_error":0.0002}
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::harness::{render_comparison_table, render_stats_table, RunReport};
use crate::jsonl::{parse_jsonl, JsonlError};
use crate::rcf::Field;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingLogRecord {
    Loss {
        run: String,
        step: u64,
        split: String,
        loss: f64,
    },
    Steering {
        run: String,
        field: Field,
        value: u8,
        metric: String,
        samples: u64,
        mean: f64,
    },
    Conflict {
        run: String,
        pairs: u64,
        own_preferred: u64,
    },
    GradCheck {
        run: String,
        params: u64,
        max_rel_error: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub points: usize,
    pub first_step: u64,
    pub first: f64,
    pub last_step: u64,
    pub last: f64,
    pub min: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogSummary {
    /// Keyed by (run, split).
    pub losses: BTreeMap<(String, String), LossSummary>,
    /// Keyed by (run, field, metric); values ordered by score.
    pub steering: BTreeMap<(String, Field, String), BTreeMap<u8, f64>>,
    /// Keyed by run: (pairs, own_preferred).
    pub conflicts: BTreeMap<String, (u64, u64)>,
    pub grad_checks: BTreeMap<String, (u64, f64)>,
}

pub fn summarize_log(records: &[TrainingLogRecord]) -> LogSummary {
    let mut out = LogSummary::default();
    let mut curves: BTreeMap<(String, String), Vec<(u64, f64)>> = BTreeMap::new();
    for r in records {
        match r {
            TrainingLogRecord::Loss { run, step, split, loss } => {
                curves.entry((run.clone(), split.clone())).or_default().push((*step, *loss));
            }
            TrainingLogRecord::Steering { run, field, value, metric, mean, .. } => {
                out.steering
                    .entry((run.clone(), *field, metric.clone()))
                    .or_default()
                    .insert(*value, *mean);
            }
            TrainingLogRecord::Conflict { run, pairs, own_preferred } => {
                let e = out.conflicts.entry(run.clone()).or_default();
                e.0 += pairs;
                e.1 += own_preferred;
            }
            TrainingLogRecord::GradCheck { run, params, max_rel_error } => {
                out.grad_checks.insert(run.clone(), (*params, *max_rel_error));
            }
        }
    }
    for (key, mut points) in curves {
        points.sort_by_key(|p| p.0);
        let (first_step, first) = points[0];
        let (last_step, last) = points[points.len() - 1];
        out.losses.insert(
            key,
            LossSummary {
                points: points.len(),
                first_step,
                first,
                last_step,
                last,
                min: points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
                diverged: points.iter().any(|p| !p.1.is_finite()),
            },
        );
    }
    out
}

pub fn render_log_summary(summary: &LogSummary) -> String {
    let mut out = String::new();
    if !summary.losses.is_empty() {
        let _ = writeln!(out, "loss curves");
        let _ = writeln!(
            out,
            "{:<16} {:<12} {:>6} {:>12} {:>12} {:>12}",
            "run", "split", "points", "first", "last", "min"
        );
        for ((run, split), l) in &summary.losses {
            let _ = writeln!(
                out,
                "{:<16} {:<12} {:>6} {:>12.4} {:>12.4} {:>12.4}{}",
                run,
                split,
                l.points,
                l.first,
                l.last,
                l.min,
                if l.diverged { "  DIVERGED" } else { "" }
            );
        }
    }
    if !summary.steering.is_empty() {
        let _ = writeln!(out, "steering");
        for ((run, field, metric), values) in &summary.steering {
            let cells: Vec<String> = values.iter().map(|(v, m)| format!("{v}:{m:.3}")).collect();
            let _ = writeln!(out, "{run} {} {metric}: {}", field.key(), cells.join(" "));
        }
    }
    if !summary.conflicts.is_empty() {
        let _ = writeln!(out, "conflict resolution");
        for (run, (pairs, own)) in &summary.conflicts {
            if *pairs == 0 {
                let _ = writeln!(out, "{run}: no conflicted pairs");
            } else {
                let _ = writeln!(out, "{run}: {own}/{pairs} own-control preferred ({:.3})", *own as f64 / *pairs as f64);
            }
        }
    }
    if !summary.grad_checks.is_empty() {
        let _ = writeln!(out, "gradient checks");
        for (run, (params, err)) in &summary.grad_checks {
            let _ = writeln!(out, "{run}: {params} params, max rel error {err:.2e}");
        }
    }
    out
}

/// Renders either an evaluation report (a JSON document) or a training log
/// (JSONL of [`TrainingLogRecord`]).
pub fn render_any(text: &str) -> Result<String, JsonlError> {
    if let Ok(report) = serde_json::from_str::<RunReport>(text) {
        let mut out = render_comparison_table(&report);
        for c in &report.conditions {
            let _ = writeln!(out, "\n[{}]", c.label);
            out.push_str(&render_stats_table(&c.trace_stats));
        }
        return Ok(out);
    }
    let records: Vec<TrainingLogRecord> = parse_jsonl(text)?;
    Ok(render_log_summary(&summarize_log(&records)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG: &str = r#"{"kind":"loss","run":"cond","step":10,"split":"train","loss":1.5}
{"kind":"loss","run":"cond","step":0,"split":"train","loss":3.0}
{"kind":"loss","run":"cond","step":20,"split":"train","loss":0.5}
{"kind":"steering","run":"cond","field":"search_depth","value":9,"metric":"mean_depth","samples":100,"mean":4.5}
{"kind":"steering","run":"cond","field":"search_depth","value":0,"metric":"mean_depth","samples":100,"mean":1.0}
{"kind":"conflict","run":"cond","pairs":10,"own_preferred":7}
{"kind":"grad_check","run":"micro","params":10,"max_rel_error":0.0001}
"#;

    #[test]
    fn summarizes_training_log() {
        let recs: Vec<TrainingLogRecord> = parse_jsonl(LOG).unwrap();
        let s = summarize_log(&recs);
        let l = &s.losses[&("cond".to_string(), "train".to_string())];
        assert_eq!((l.first, l.last, l.min, l.points), (3.0, 0.5, 0.5, 3));
        let steer = &s.steering[&("cond".to_string(), Field::SearchDepth, "mean_depth".to_string())];
        assert_eq!(steer.keys().copied().collect::<Vec<_>>(), vec![0, 9]);
        assert_eq!(s.conflicts["cond"], (10, 7));
        let text = render_any(LOG).unwrap();
        assert!(text.contains("7/10 own-control preferred (0.700)"));
        assert!(text.contains("search_depth mean_depth: 0:1.000 9:4.500"));
    }

    #[test]
    fn rejects_unknown_kind() {
        assert!(render_any("{\"kind\":\"mystery\"}\n").is_err());
    }
}
