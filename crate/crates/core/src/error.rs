use thiserror::Error;

/// Errors produced by model construction and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The no-report branch has zero probability, so the conditioned belief is undefined.
    #[error("zero survival mass: no-report outcome is impossible")]
    ZeroSurvivalMass,

    #[error("no convergence after {iterations} iterations (last difference {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("belief enumeration exceeded cap of {cap} distinct beliefs")]
    CapExceeded { cap: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
