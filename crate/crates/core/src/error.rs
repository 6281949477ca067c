use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value {value} at index {index} in {what}")]
    NonFinite { what: &'static str, index: usize, value: f64 },

    #[error("supports differ: {0}")]
    SupportMismatch(String),

    #[error("basins overlap at {} support point(s), first indices {:?}", .points.len(), &points[..points.len().min(8)])]
    OverlappingBasins { points: Vec<usize> },

    #[error("exact convolution needs {states} states, above the cap of {cap}; use bt_weight_mc (or the quadrature estimator)")]
    StateCapExceeded { states: usize, cap: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("EM fit failed at iteration {iteration}: {source}")]
    EmFailure {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
