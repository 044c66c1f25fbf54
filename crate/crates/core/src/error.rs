use thiserror::Error;

/// Errors raised by samplers, models, filters and evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Every weight of a sample is zero; the particle system has degenerated.
    #[error("all particle weights are zero")]
    AllWeightsZero,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("first-stage weight must be strictly positive, got {0}")]
    NonpositiveFirstStageWeight(f64),

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    /// The target function is constant under the relevant law, so the
    /// optimal weights or allocation vanish identically.
    #[error("degenerate target function")]
    DegenerateTarget,

    #[error("grid too narrow at step {step}: boundary density ratio {ratio:.3e}")]
    GridTooNarrow { step: usize, ratio: f64 },

    #[error("mode search failed: {0}")]
    ModeSearchFailed(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    /// A filter replication lost all its weight at the given step.
    #[error("replication degenerated at step {step}")]
    ReplicationDegenerate { step: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
