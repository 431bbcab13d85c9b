use thiserror::Error;

/// Errors raised by the numerical routines and the run pipeline.
#[derive(Debug, Error)]
pub enum KanError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("newton refinement did not converge on branch {branch} (target {target}, residual {residual:e})")]
    BranchNonConvergence {
        branch: usize,
        target: f64,
        residual: f64,
    },

    #[error("map is not expanding: |E'({theta})| = {derivative} <= 1")]
    NotExpanding { theta: f64, derivative: f64 },

    #[error("fiber invariance violated at (theta={theta}, t={t}): image {image} leaves [0,1]")]
    InvarianceViolation { theta: f64, t: f64, image: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("logarithmic singularity: d/dt phi vanishes at theta={theta}, t={t}")]
    ZeroDerivative { theta: f64, t: f64 },

    #[error("classifier never decided: {0}")]
    Undecided(String),

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("excluded measure {excluded} exceeds the limit {limit}")]
    ExcludedMass { excluded: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KanError>;
