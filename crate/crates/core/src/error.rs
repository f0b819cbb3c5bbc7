use thiserror::Error;

/// Errors raised by the accounting primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("unsupported Renyi order {0}: conversion requires alpha > 1")]
    UnsupportedOrder(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("point {index}: {source}")]
    AtPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("state error: {0}")]
    State(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("quadrature did not converge (residual {residual:e})")]
    Quadrature { residual: f64 },

    /// A gradient descent run hit a non-finite value; `trace` holds every
    /// round completed before the failure.
    #[error("run aborted at round {round}: {what}")]
    RunAborted {
        round: usize,
        what: String,
        trace: Box<crate::dpgd::GdTrace>,
    },

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
