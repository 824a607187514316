use thiserror::Error;

/// Errors produced by the spectral models, filters and experiment drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation error at lambda = {lambda:e}: {message}")]
    Evaluation { lambda: f64, message: String },

    #[error("degenerate source: {0}")]
    DegenerateSource(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("{what} = {value:e} outside ({lo:e}, {hi:e})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("insufficient data: need {needed} usable samples, have {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("sweep stopped after {completed} of {total} samples: {source}")]
    PartialCurve {
        completed: usize,
        total: usize,
        /// Values computed before the failing sample, in grid order.
        prefix: Vec<f64>,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::OutOfRange { .. } | Error::DegenerateSource(_) => true,
            Error::PartialCurve { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
