use thiserror::Error;

use crate::model::Violation;

/// Errors surfaced by the core library.
#[derive(Debug, Error)]
pub enum FogError {
    #[error("invalid model: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("invalid reliability chain: {0}")]
    InvalidChain(String),

    #[error("degenerate chain: both states absorbing (p = 1, q = 1)")]
    DegenerateChain,

    #[error("horizon shorter than round-trip delay (N = {horizon}, M = {delay})")]
    HorizonShorterThanDelay { horizon: usize, delay: usize },

    #[error("closed form requires a symmetric chain (p = 1 - q), got p = {p}, q = {q}")]
    AsymmetricChain { p: f64, q: f64 },

    #[error("sandwich hypotheses violated: need p > 1 - q, got p = {p}, q = {q}")]
    SandwichHypotheses { p: f64, q: f64 },

    #[error("regime mismatch: expected {expected}, got {got}")]
    RegimeMismatch { expected: String, got: String },

    #[error("linear solve failed at stage {stage}: {what}")]
    LinearSolve { stage: usize, what: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("horizon {horizon} too large for exact {what} (limit {limit}); use monte-carlo")]
    HorizonTooLarge {
        what: &'static str,
        horizon: usize,
        limit: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("stage {stage} out of range: {why}")]
    Stage { stage: usize, why: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("config error: {0}")]
    Config(String),
}

/// Joins violations, folding runs that differ only in consecutive stages
/// into one `k=a..=b` entry.
fn join_violations(v: &[Violation]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        if let Some(k0) = v[i].stage() {
            while j < v.len() && v[j] == v[i].at_stage(k0 + j - i) {
                j += 1;
            }
            if j - i > 1 {
                let range = format!("k={k0}..={}", k0 + j - i - 1);
                parts.push(v[i].to_string().replacen(&format!("k={k0}"), &range, 1));
                i = j;
                continue;
            }
        }
        parts.push(v[i].to_string());
        i += 1;
    }
    parts.join("; ")
}

pub type Result<T> = std::result::Result<T, FogError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_runs_are_folded() {
        let shape = |name, k| Violation::Shape {
            name,
            k,
            expected: (2, 2),
            got: (1, 1),
        };
        let err = FogError::InvalidModel(vec![
            shape("W", 0),
            shape("W", 1),
            shape("W", 2),
            shape("Q", 4),
            Violation::NotPsd { name: "Q", k: 5 },
        ]);
        assert_eq!(
            err.to_string(),
            "invalid model: W at k=0..=2 has shape 1x1, expected 2x2; \
             Q at k=4 has shape 1x1, expected 2x2; Q not positive semidefinite at k=5"
        );
    }
}
