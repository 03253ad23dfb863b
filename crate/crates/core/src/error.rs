//! Error type shared across the crate.
//!
//! Invalid models are rejected at construction, never at oracle-call time, so
//! oracle paths only surface domain errors (out-of-support views, non-finite
//! or non-positive scores) and resource errors (block arithmetic, divergence).

use thiserror::Error;

/// One violated model invariant with its numerical slack, as reported by
/// validation. `slack` is how far past the tolerance the value landed.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantViolation {
    pub invariant: String,
    pub slack: f64,
}

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (slack {:e})", self.invariant, self.slack)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", format_violations(.0))]
    InvalidModel(Vec<InvariantViolation>),

    #[error("{view} view {value} is outside the model support")]
    OutOfSupport { view: &'static str, value: String },

    #[error("{op} is not supported for {model} models: {why}")]
    Unsupported {
        op: &'static str,
        model: &'static str,
        why: &'static str,
    },

    #[error("non-finite score at (x={x}, z={z})")]
    NonFiniteScore { x: String, z: String },

    #[error("non-positive score {score} at (x={x}, z={z}); the direct loss needs g > 0")]
    NonPositiveScore { x: String, z: String, score: f64 },

    #[error("empty data")]
    EmptyData,

    #[error(
        "block size floor(m / log2(1/delta)) is zero for m={m}, delta={delta}; \
         increase m or delta"
    )]
    BlockArithmetic { m: usize, delta: f64 },

    #[error("training diverged at step {step}; last losses {last_losses:?}")]
    Divergence { step: usize, last_losses: Vec<f64> },

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("slope fit needs at least 3 distinct m values, got {available} after exclusions")]
    SlopePoints { available: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),
}

fn format_violations(vs: &[InvariantViolation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
