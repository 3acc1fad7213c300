//! Search-task synthesis: 24-points instances and calculus tasks with
//! answers known by construction.

pub mod calculus;
pub mod twenty_four;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ExprError;
pub use calculus::{gen_calculus, CalculusKind, CalculusTask};
pub use twenty_four::{gen_24, solve_24, TwentyFourInstance};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported task kind `{0}`")]
    UnsupportedKind(String),
    #[error("statement does not parse: {0}")]
    BadStatement(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Line-delimited task record: `{id, kind, statement, reference_answer, seed}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    pub kind: String,
    pub statement: String,
    pub reference_answer: String,
    pub seed: u64,
}

pub const TWENTY_FOUR_KIND: &str = "twenty_four";
pub const NO_SOLUTION: &str = "no solution";

impl From<CalculusTask> for TaskRecord {
    fn from(t: CalculusTask) -> Self {
        TaskRecord {
            id: t.id,
            kind: t.kind.name().to_string(),
            statement: t.statement,
            reference_answer: t.reference_answer,
            seed: t.construction_seed,
        }
    }
}

impl TwentyFourInstance {
    pub fn statement(&self) -> String {
        let [a, b, c, d] = self.numbers;
        format!("Use the numbers {a}, {b}, {c}, {d} exactly once each with +, -, *, / to make 24.")
    }

    pub fn to_record(&self, id: String, seed: u64) -> TaskRecord {
        TaskRecord {
            id,
            kind: TWENTY_FOUR_KIND.to_string(),
            statement: self.statement(),
            reference_answer: self.witness.clone().unwrap_or_else(|| NO_SOLUTION.into()),
            seed,
        }
    }
}

/// Relative weights of each task family in a synthesized search-task set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchTaskMix {
    pub twenty_four: f64,
    pub differentiate: f64,
    pub integrate: f64,
    pub limit: f64,
    pub ode: f64,
    /// Emit only solvable 24-points instances.
    pub solvable_only: bool,
}

impl Default for SearchTaskMix {
    fn default() -> Self {
        SearchTaskMix {
            twenty_four: 1.0,
            differentiate: 1.0,
            integrate: 1.0,
            limit: 1.0,
            ode: 1.0,
            solvable_only: true,
        }
    }
}

/// Mixed search-task set drawn family-by-family according to `mix`.
pub fn gen_search_tasks(
    rng_seed: u64,
    count: usize,
    mix: &SearchTaskMix,
) -> Result<Vec<TaskRecord>, SynthError> {
    let weights = [
        mix.twenty_four,
        mix.differentiate,
        mix.integrate,
        mix.limit,
        mix.ode,
    ];
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(SynthError::InvalidInput(format!("bad mix weights {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let mut draw = rng.random::<f64>() * total;
        let mut family = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if draw < *w {
                family = i;
                break;
            }
            draw -= w;
        }
        let seed: u64 = rng.random();
        let record = match family {
            0 => {
                let instance = gen_24(seed, 1, mix.solvable_only)
                    .pop()
                    .expect("gen_24 returns count instances");
                instance.to_record(format!("{TWENTY_FOUR_KIND}-{seed:016x}"), seed)
            }
            f => calculus::task_from_seed(CalculusKind::ALL[f - 1], seed)?.into(),
        };
        debug_assert!(!record.id.is_empty(), "task {index}");
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_respects_zero_weights() {
        let mix = SearchTaskMix {
            twenty_four: 1.0,
            differentiate: 0.0,
            integrate: 0.0,
            limit: 0.0,
            ode: 0.0,
            solvable_only: true,
        };
        let tasks = gen_search_tasks(1, 20, &mix).unwrap();
        assert!(tasks.iter().all(|t| t.kind == TWENTY_FOUR_KIND));
        assert!(tasks.iter().all(|t| t.reference_answer != NO_SOLUTION));
    }

    #[test]
    fn default_mix_covers_families() {
        let tasks = gen_search_tasks(4, 200, &SearchTaskMix::default()).unwrap();
        for kind in ["twenty_four", "differentiate", "integrate", "limit", "ode"] {
            assert!(tasks.iter().any(|t| t.kind == kind), "{kind}");
        }
        assert_eq!(tasks, gen_search_tasks(4, 200, &SearchTaskMix::default()).unwrap());
    }

    #[test]
    fn rejects_bad_mix() {
        let mix = SearchTaskMix {
            twenty_four: -1.0,
            ..SearchTaskMix::default()
        };
        assert!(gen_search_tasks(1, 1, &mix).is_err());
    }
}
