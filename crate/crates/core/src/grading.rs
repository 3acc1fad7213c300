//! Final-answer extraction, answer equivalence and the unbiased Pass@k
//! estimator.

use std::io::BufRead;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;

/// Absolute and relative tolerance of the numeric comparison step.
pub const NUMERIC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GradingError {
    #[error("pass@k domain error: {0}")]
    DomainError(String),
    #[error("bad grade vector on line {line}: {message}")]
    BadVector { line: usize, message: String },
}

/// Content of the last `\boxed{...}`, with nested braces kept. `None` when
/// there is no box or the last one is unbalanced.
pub fn extract_boxed(text: &str) -> Option<String> {
    let (start, _) = text.rmatch_indices("\\boxed").find(|(i, m)| {
        text[i + m.len()..].trim_start().starts_with('{')
    })?;
    let after = &text[start + "\\boxed".len()..];
    let open = after.find('{')?;
    let body = &after[open + 1..];
    let mut depth = 1usize;
    for (i, c) in body.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(body[..i].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

/// Replaces `\cmd{arg}` (brace-matched) by `render(arg)`.
fn rewrite_command(s: &str, command: &str, render: impl Fn(&str) -> String) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find(command) {
        let after = &rest[pos + command.len()..];
        // `\text` must not match `\textbf`
        if after.starts_with(|c: char| c.is_ascii_alphabetic()) {
            out.push_str(&rest[..pos + command.len()]);
            rest = after;
            continue;
        }
        match brace_group(after.trim_start()) {
            Some((arg, tail)) => {
                out.push_str(&rest[..pos]);
                out.push_str(&render(arg));
                rest = tail;
            }
            None => {
                out.push_str(&rest[..pos + command.len()]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Splits `{arg}tail` (or a single-character argument) into `(arg, tail)`.
fn brace_group(s: &str) -> Option<(&str, &str)> {
    if let Some(body) = s.strip_prefix('{') {
        let mut depth = 1usize;
        for (i, c) in body.char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some((&body[..i], &body[i + 1..]));
                    }
                }
                _ => {}
            }
        }
        return None;
    }
    let c = s.chars().next()?;
    if c.is_ascii_alphanumeric() {
        Some(s.split_at(c.len_utf8()))
    } else {
        None
    }
}

fn rewrite_frac(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(pos) = rest.find("\\frac") {
        let after = &rest[pos + "\\frac".len()..];
        let parsed = brace_group(after.trim_start())
            .and_then(|(num, tail)| brace_group(tail.trim_start()).map(|(den, tail)| (num, den, tail)));
        match parsed {
            Some((num, den, tail)) => {
                out.push_str(&rest[..pos]);
                out.push_str(&format!("({})/({})", rewrite_frac(num), rewrite_frac(den)));
                rest = tail;
            }
            None => {
                out.push_str(&rest[..pos + "\\frac".len()]);
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// The normalization pipeline applied to both sides before comparison.
pub fn normalize_answer(answer: &str) -> String {
    let mut s = answer.trim().to_string();
    for wrapper in ["\\text", "\\textbf", "\\mathrm", "\\mathbf", "\\mbox"] {
        s = rewrite_command(&s, wrapper, |arg| arg.to_string());
    }
    for (from, to) in [
        ("\\left", ""),
        ("\\right", ""),
        ("$", ""),
        ("\\!", ""),
        ("\\,", ""),
        ("\\;", ""),
        ("\\:", ""),
        ("\\quad", ""),
        ("\\ ", ""),
        ("\\dfrac", "\\frac"),
        ("\\tfrac", "\\frac"),
        ("^\\circ", ""),
        ("^{\\circ}", ""),
        ("\\%", ""),
        ("%", ""),
        ("\\cdot", "*"),
        ("\\times", "*"),
        ("\\pi", "pi"),
    ] {
        s = s.replace(from, to);
    }
    s = rewrite_frac(&s);
    s = rewrite_command(&s, "\\sqrt", |arg| format!("sqrt({arg})"));
    s.retain(|c| !c.is_whitespace());
    while s.ends_with('.') {
        s.pop();
    }
    // a leading single-letter assignment such as `x=5`
    let bytes = s.as_bytes();
    if bytes.len() > 2 && bytes[0].is_ascii_alphabetic() && bytes[1] == b'=' {
        s.drain(..2);
    }
    if is_grouped_number(&s) {
        s.retain(|c| c != ',');
    }
    s
}

fn is_grouped_number(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let groups: Vec<&str> = whole.split(',').collect();
    groups.len() > 1
        && !groups[0].is_empty()
        && groups[0].len() <= 3
        && groups[1..].iter().all(|g| g.len() == 3)
        && groups.iter().all(|g| g.bytes().all(|b| b.is_ascii_digit()))
        && frac.bytes().all(|b| b.is_ascii_digit())
}

fn parse_constant(normalized: &str) -> Option<Expr> {
    let expr = Expr::parse(normalized).ok()?;
    let has_variables = normalized
        .split(|c: char| !c.is_alphabetic())
        .any(|word| !word.is_empty() && !matches!(word, "pi" | "e" | "sqrt" | "sin" | "cos" | "exp" | "ln" | "log" | "abs"));
    (!has_variables).then_some(expr)
}

/// Answer equivalence after normalization: exact string match, then exact
/// rational comparison when both sides are rational, then numeric
/// comparison within [`NUMERIC_TOLERANCE`] when both sides are finite reals.
pub fn is_equivalent(predicted: &str, reference: &str) -> bool {
    if predicted.trim().is_empty() || reference.trim().is_empty() {
        return false;
    }
    let (p, r) = (normalize_answer(predicted), normalize_answer(reference));
    if p == r {
        return true;
    }
    let (Some(pe), Some(re)) = (parse_constant(&p), parse_constant(&r)) else {
        return false;
    };
    if let (Some(a), Some(b)) = (pe.eval_exact(), re.eval_exact()) {
        return a == b;
    }
    let (a, b) = (pe.eval(), re.eval());
    if !a.is_finite() || !b.is_finite() {
        return false;
    }
    let diff = (a - b).abs();
    diff <= NUMERIC_TOLERANCE || diff <= NUMERIC_TOLERANCE * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    NoExtraction,
    NotEquivalent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeResult {
    pub extracted: Option<String>,
    pub equivalent: bool,
    pub failure_kind: Option<FailureKind>,
}

impl GradeResult {
    pub fn is_correct(&self) -> bool {
        self.equivalent
    }
}

/// Extracts the boxed answer from a completion and compares it with the
/// reference. Extraction failure counts as incorrect.
pub fn grade(completion: &str, reference: &str) -> GradeResult {
    match extract_boxed(completion) {
        None => GradeResult {
            extracted: None,
            equivalent: false,
            failure_kind: Some(FailureKind::NoExtraction),
        },
        Some(answer) => {
            let equivalent = is_equivalent(&answer, reference);
            GradeResult {
                extracted: Some(answer),
                equivalent,
                failure_kind: (!equivalent).then_some(FailureKind::NotEquivalent),
            }
        }
    }
}

/// Anything that can decide whether a completion answers a reference.
pub trait Grader: Send + Sync {
    fn grade(&self, completion: &str, reference: &str) -> GradeResult;
}

/// The default grader: last boxed answer plus [`is_equivalent`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BoxedAnswerGrader;

impl Grader for BoxedAnswerGrader {
    fn grade(&self, completion: &str, reference: &str) -> GradeResult {
        grade(completion, reference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassKInput {
    /// Samples drawn for the problem.
    pub n: u64,
    /// Correct samples among them.
    pub c: u64,
    /// Selection size.
    pub k: u64,
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u8);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `1 - C(n-c, k) / C(n, k)`, from exact binomials.
pub fn pass_at_k(input: PassKInput) -> Result<f64, GradingError> {
    let PassKInput { n, c, k } = input;
    if c > n {
        return Err(GradingError::DomainError(format!("c={c} exceeds n={n}")));
    }
    if k == 0 || k > n {
        return Err(GradingError::DomainError(format!("k={k} outside 1..={n}")));
    }
    let failing = BigRational::new(binomial(n - c, k).into(), binomial(n, k).into());
    let value = (BigRational::one() - failing)
        .to_f64()
        .expect("a ratio in [0, 1] converts to f64");
    Ok(value)
}

/// Arithmetic mean over problems; `None` for an empty set.
pub fn mean_pass_at_k(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// One regression vector: grading `completion` against `reference` must
/// yield `expected`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeVector {
    pub completion: String,
    pub reference: String,
    pub expected: bool,
    #[serde(default)]
    pub note: String,
}

/// Loads line-delimited grade vectors; blank lines are skipped.
pub fn load_grade_vectors(reader: impl BufRead) -> Result<Vec<GradeVector>, GradingError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GradingError::BadVector {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| GradingError::BadVector {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
