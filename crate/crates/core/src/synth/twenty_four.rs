//! 24-points game: exhaustive solver over exact rationals and a seeded
//! instance generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::expr::{Expr, Rational};

pub const TARGET: i64 = 24;
pub const MIN_CARD: i64 = 1;
pub const MAX_CARD: i64 = 13;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwentyFourInstance {
    pub numbers: [i64; 4],
    pub solvable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

fn validate(numbers: &[i64]) -> Result<(), SynthError> {
    if numbers.len() != 4 {
        return Err(SynthError::InvalidInput(format!(
            "expected 4 numbers, got {}",
            numbers.len()
        )));
    }
    if let Some(bad) = numbers.iter().find(|n| !(MIN_CARD..=MAX_CARD).contains(*n)) {
        return Err(SynthError::InvalidInput(format!(
            "{bad} is outside {MIN_CARD}..={MAX_CARD}"
        )));
    }
    Ok(())
}

/// Finds an arithmetic expression over `+ - * /` using each number exactly
/// once that evaluates to 24, or `None` when no such expression exists.
///
/// Every way of combining two remaining values (in both orders for the
/// non-commutative operators) is tried recursively, which covers all
/// orderings, operator choices and tree shapes. Branches dividing by an
/// intermediate zero are pruned.
pub fn solve_24(numbers: &[i64]) -> Result<Option<Expr>, SynthError> {
    validate(numbers)?;
    let pool: Vec<(Rational, Expr)> = numbers
        .iter()
        .map(|&n| (Rational::from_integer(n), crate::expr::int(n)))
        .collect();
    Ok(search(pool))
}

fn search(pool: Vec<(Rational, Expr)>) -> Option<Expr> {
    if pool.len() == 1 {
        let (value, expr) = pool.into_iter().next()?;
        return (value == Rational::from_integer(TARGET)).then_some(expr);
    }
    for i in 0..pool.len() {
        for j in (i + 1)..pool.len() {
            let (a, ea) = &pool[i];
            let (b, eb) = &pool[j];
            let rest: Vec<(Rational, Expr)> = pool
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i && *k != j)
                .map(|(_, p)| p.clone())
                .collect();

            let mut candidates = vec![
                (a + b, ea.clone() + eb.clone()),
                (a * b, ea.clone() * eb.clone()),
                (a - b, ea.clone() - eb.clone()),
                (b - a, eb.clone() - ea.clone()),
            ];
            if *b != Rational::from_integer(0) {
                candidates.push((a / b, ea.clone() / eb.clone()));
            }
            if *a != Rational::from_integer(0) {
                candidates.push((b / a, eb.clone() / ea.clone()));
            }

            for candidate in candidates {
                let mut next = rest.clone();
                next.push(candidate);
                if let Some(found) = search(next) {
                    return Some(found);
                }
            }
        }
    }
    None
}

/// Checks that `witness` is an expression over `numbers` (each used once,
/// only `+ - * /`) whose exact value is 24.
pub fn verify_witness(numbers: &[i64], witness: &str) -> bool {
    let Ok(expr) = Expr::parse(witness) else {
        return false;
    };
    let mut leaves = Vec::new();
    if !collect_leaves(&expr, &mut leaves) {
        return false;
    }
    let mut expected = numbers.to_vec();
    expected.sort_unstable();
    leaves.sort_unstable();
    leaves == expected && expr.eval_exact() == Some(Rational::from_integer(TARGET))
}

fn collect_leaves(expr: &Expr, out: &mut Vec<i64>) -> bool {
    match expr {
        Expr::Num(r) if r.is_integer() => {
            out.push(*r.numer());
            true
        }
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
            collect_leaves(a, out) && collect_leaves(b, out)
        }
        _ => false,
    }
}

pub fn label(numbers: [i64; 4]) -> Result<TwentyFourInstance, SynthError> {
    let witness = solve_24(&numbers)?;
    Ok(TwentyFourInstance {
        numbers,
        solvable: witness.is_some(),
        witness: witness.map(|w| w.to_string()),
    })
}

/// Draws `count` instances with cards uniform in 1..=13. With
/// `solvable_only`, unsolvable draws are skipped.
pub fn gen_24(seed: u64, count: usize, solvable_only: bool) -> Vec<TwentyFourInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let numbers: [i64; 4] = std::array::from_fn(|_| rng.random_range(MIN_CARD..=MAX_CARD));
        let instance = label(numbers).expect("generated cards are in range");
        if instance.solvable || !solvable_only {
            out.push(instance);
        }
    }
    out
}
