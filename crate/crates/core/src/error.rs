use thiserror::Error;

/// Errors raised by the library. Budget exhaustion and simulator divergence
/// are ordinary outcomes and are reported through return values instead.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("controller has {got} parameters but the design needs {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid design: {0}")]
    InvalidGenome(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("curves are sampled at different checkpoints")]
    CheckpointMismatch,

    #[error("cannot summarize an empty sample")]
    EmptySample,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("row {0} carries no design or controller payload")]
    MissingPayload(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
