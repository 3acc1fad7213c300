//! Calculus tasks whose reference answers are correct by construction.
//!
//! | kind            | statement                         | reference            |
//! |-----------------|-----------------------------------|----------------------|
//! | `differentiate` | `d/dx [f]`                        | `f'` (symbolic)      |
//! | `integrate`     | `∫ F' dx` for a sampled `F`       | `F + C`              |
//! | `limit`         | difference quotients and standard | known value          |
//! |                 | forms built around a known `f'(a)`|                      |
//! | `ode`           | `y' = a*y`                        | `y = C*exp(a*x)`     |

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::expr::{call, differentiate, int, pow, simplify, var, Expr, Func, Rational};

pub const VARIABLE: &str = "x";

/// Points used by the numeric construction checks. All positive so that
/// logarithmic antiderivatives stay in their domain.
pub fn sample_points() -> Vec<f64> {
    (0..20).map(|i| 0.3 + 0.1 * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalculusKind {
    Differentiate,
    Integrate,
    Limit,
    Ode,
}

impl CalculusKind {
    pub const ALL: [CalculusKind; 4] = [
        CalculusKind::Differentiate,
        CalculusKind::Integrate,
        CalculusKind::Limit,
        CalculusKind::Ode,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CalculusKind::Differentiate => "differentiate",
            CalculusKind::Integrate => "integrate",
            CalculusKind::Limit => "limit",
            CalculusKind::Ode => "ode",
        }
    }
}

impl fmt::Display for CalculusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CalculusKind {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CalculusKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SynthError::UnsupportedKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalculusTask {
    pub id: String,
    pub kind: CalculusKind,
    pub statement: String,
    pub reference_answer: String,
    #[serde(rename = "seed")]
    pub construction_seed: u64,
}

/// A statement parsed back into its expression parts.
#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Differentiate(Expr),
    Integrate(Expr),
    Limit { point: Rational, expr: Expr },
    /// Right-hand side of `y' = ...`, in terms of `y`.
    Ode(Expr),
}

fn bad_statement(text: &str) -> SynthError {
    SynthError::BadStatement(text.to_string())
}

pub fn parse_statement(text: &str) -> Result<Statement, SynthError> {
    let parse = |s: &str| Expr::parse(s).map_err(|e| SynthError::BadStatement(format!("{text}: {e}")));
    if let Some(rest) = text.strip_prefix("d/dx [") {
        let inner = rest.strip_suffix(']').ok_or_else(|| bad_statement(text))?;
        return Ok(Statement::Differentiate(parse(inner)?));
    }
    if let Some(rest) = text.strip_prefix("∫ ") {
        let inner = rest.strip_suffix(" dx").ok_or_else(|| bad_statement(text))?;
        return Ok(Statement::Integrate(parse(inner)?));
    }
    if let Some(rest) = text.strip_prefix("lim x->") {
        let (point, body) = rest.split_once(' ').ok_or_else(|| bad_statement(text))?;
        let point = parse(point)?.eval_exact().ok_or_else(|| bad_statement(text))?;
        return Ok(Statement::Limit {
            point,
            expr: parse(body)?,
        });
    }
    if let Some(rest) = text.strip_prefix("y' = ") {
        return Ok(Statement::Ode(parse(rest)?));
    }
    Err(bad_statement(text))
}

/// Parses a reference answer into an expression: the `+ C` of an
/// antiderivative and the `y = ` of an ODE solution are stripped, leaving
/// `C` as a free symbol in the latter.
pub fn parse_reference(kind: CalculusKind, text: &str) -> Result<Expr, SynthError> {
    let body = match kind {
        CalculusKind::Integrate => text.strip_suffix(" + C").ok_or_else(|| bad_statement(text))?,
        CalculusKind::Ode => text.strip_prefix("y = ").ok_or_else(|| bad_statement(text))?,
        CalculusKind::Differentiate | CalculusKind::Limit => text,
    };
    Expr::parse(body).map_err(|e| SynthError::BadStatement(format!("{text}: {e}")))
}

fn task(kind: CalculusKind, seed: u64, statement: String, reference: String) -> CalculusTask {
    CalculusTask {
        id: format!("{kind}-{seed:016x}"),
        kind,
        statement,
        reference_answer: reference,
        construction_seed: seed,
    }
}

/// `∫ F' dx` with reference `F + C`.
pub fn integrate_task(antiderivative: &Expr, seed: u64) -> Result<CalculusTask, SynthError> {
    let antiderivative = simplify(antiderivative);
    let integrand = differentiate(&antiderivative, VARIABLE)?;
    Ok(task(
        CalculusKind::Integrate,
        seed,
        format!("∫ {integrand} dx"),
        format!("{antiderivative} + C"),
    ))
}

pub fn differentiate_task(expr: &Expr, seed: u64) -> Result<CalculusTask, SynthError> {
    let expr = simplify(expr);
    let derivative = differentiate(&expr, VARIABLE)?;
    Ok(task(
        CalculusKind::Differentiate,
        seed,
        format!("d/dx [{expr}]"),
        derivative.to_string(),
    ))
}

/// `y' = a*y`, solved by `y = C*exp(a*x)`.
pub fn ode_task(rate: i64, seed: u64) -> CalculusTask {
    let rhs = simplify(&(int(rate) * var("y")));
    let exponent = simplify(&(int(rate) * var(VARIABLE)));
    task(
        CalculusKind::Ode,
        seed,
        format!("y' = {rhs}"),
        format!("y = C*{}", call(Func::Exp, exponent)),
    )
}

fn limit_task(point: i64, body: &Expr, value: Rational, seed: u64) -> CalculusTask {
    task(
        CalculusKind::Limit,
        seed,
        format!("lim x->{} {}", int(point), simplify(body)),
        Expr::Num(value).to_string(),
    )
}

fn nonzero(rng: &mut ChaCha8Rng, max: i64) -> i64 {
    let v = rng.random_range(1..=max);
    if rng.random_bool(0.5) {
        -v
    } else {
        v
    }
}

fn x() -> Expr {
    var(VARIABLE)
}

/// One elementary building block `a*g(b*x)`.
fn block(rng: &mut ChaCha8Rng) -> Expr {
    let a = int(nonzero(rng, 5));
    let b = int(rng.random_range(1..=3));
    match rng.random_range(0..6) {
        0 | 1 => a * pow(x(), rng.random_range(1..=4)),
        2 => a * call(Func::Sin, b * x()),
        3 => a * call(Func::Cos, b * x()),
        4 => a * call(Func::Exp, b * x()),
        _ => a * call(Func::Ln, x()),
    }
}

fn polynomial(rng: &mut ChaCha8Rng, degree: i64) -> Expr {
    let mut p = int(rng.random_range(-5..=5));
    for n in 1..=degree {
        let c = rng.random_range(-4..=4);
        p = p + int(c) * pow(x(), n);
    }
    let lead = nonzero(rng, 3);
    simplify(&(p + int(lead) * pow(x(), degree + 1)))
}

fn gen_integrate(rng: &mut ChaCha8Rng, seed: u64) -> Result<CalculusTask, SynthError> {
    let terms = rng.random_range(1..=3);
    let mut f = block(rng);
    for _ in 1..terms {
        f = f + block(rng);
    }
    integrate_task(&f, seed)
}

fn gen_differentiate(rng: &mut ChaCha8Rng, seed: u64) -> Result<CalculusTask, SynthError> {
    let degree = rng.random_range(0..=1);
    let inner = polynomial(rng, degree);
    let outer = *[Func::Sin, Func::Cos, Func::Exp].choose(rng).expect("non-empty");
    let expr = match rng.random_range(0..4) {
        0 => block(rng) * block(rng),
        1 => call(outer, inner),
        2 => call(Func::Ln, pow(x(), 2) + int(rng.random_range(1..=4))),
        _ => block(rng) / (pow(x(), 2) + int(rng.random_range(1..=3))),
    };
    differentiate_task(&expr, seed)
}

fn gen_limit(rng: &mut ChaCha8Rng, seed: u64) -> Result<CalculusTask, SynthError> {
    let b = nonzero(rng, 4);
    Ok(match rng.random_range(0..3) {
        0 => {
            let degree = rng.random_range(1..=2);
            let f = polynomial(rng, degree);
            let point = rng.random_range(-3..=3);
            let at = Rational::from_integer(point);
            let f_at = substitute_exact(&f, at)?;
            let slope = substitute_exact(&differentiate(&f, VARIABLE)?, at)?;
            let body = (f - Expr::Num(f_at)) / (x() - int(point));
            limit_task(point, &body, slope, seed)
        }
        1 => {
            let body = call(Func::Sin, int(b) * x()) / x();
            limit_task(0, &body, Rational::from_integer(b), seed)
        }
        _ => {
            let body = (call(Func::Exp, int(b) * x()) - int(1)) / x();
            limit_task(0, &body, Rational::from_integer(b), seed)
        }
    })
}

fn substitute_exact(expr: &Expr, at: Rational) -> Result<Rational, SynthError> {
    substitute(expr, &Expr::Num(at))
        .eval_exact()
        .ok_or_else(|| SynthError::BadStatement(format!("cannot evaluate {expr} exactly")))
}

fn substitute(expr: &Expr, value: &Expr) -> Expr {
    match expr {
        Expr::Var(v) if v == VARIABLE => value.clone(),
        Expr::Num(_) | Expr::Const(_) | Expr::Var(_) => expr.clone(),
        Expr::Neg(a) => -substitute(a, value),
        Expr::Add(a, b) => substitute(a, value) + substitute(b, value),
        Expr::Sub(a, b) => substitute(a, value) - substitute(b, value),
        Expr::Mul(a, b) => substitute(a, value) * substitute(b, value),
        Expr::Div(a, b) => substitute(a, value) / substitute(b, value),
        Expr::Pow(a, n) => pow(substitute(a, value), *n),
        Expr::Call(f, a) => call(*f, substitute(a, value)),
    }
}

/// Rebuilds a task from its construction seed alone.
pub fn task_from_seed(kind: CalculusKind, seed: u64) -> Result<CalculusTask, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        CalculusKind::Integrate => gen_integrate(&mut rng, seed),
        CalculusKind::Differentiate => gen_differentiate(&mut rng, seed),
        CalculusKind::Limit => gen_limit(&mut rng, seed),
        CalculusKind::Ode => Ok(ode_task(nonzero(&mut rng, 5), seed)),
    }
}

/// `count` tasks of `kind`, deterministic in `rng_seed`. Each task carries
/// its own construction seed.
pub fn gen_calculus(
    rng_seed: u64,
    kind: CalculusKind,
    count: usize,
) -> Result<Vec<CalculusTask>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..count)
        .map(|_| task_from_seed(kind, rng.random()))
        .collect()
}
