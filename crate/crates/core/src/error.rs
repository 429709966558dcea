use thiserror::Error;

use crate::solvers::SolveTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input rejected at a type or operation boundary. The message names the
    /// offending field where one exists.
    #[error("validation error: {0}")]
    Validation(String),

    /// `p` puts mass where `q` has none.
    #[error("infinite divergence: p has mass outside the support of q")]
    InfiniteDivergence,

    #[error("numeric underflow: {0}")]
    NumericUnderflow(String),

    /// A solver produced a non-finite objective or gradient. The trace up to
    /// (and excluding) the failing iterate is preserved.
    #[error("non-finite objective or gradient at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        trace: Box<SolveTrace>,
    },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// A JSON payload failed to deserialize; `path` locates the field.
    #[error("invalid payload at `{path}`: {message}")]
    Payload { path: String, message: String },

    #[error("degenerate integral: {0}")]
    DegenerateIntegral(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::InfiniteDivergence => "infinite_divergence",
            Error::NumericUnderflow(_) => "numeric_underflow",
            Error::NonFinite { .. } => "non_finite",
            Error::NonFiniteState { .. } => "non_finite_state",
            Error::Config(_) => "config",
            Error::Payload { .. } => "payload",
            Error::DegenerateIntegral(_) => "degenerate_integral",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    /// Whether the input, rather than the computation, was at fault.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Config(_) | Error::Payload { .. })
    }

    /// The offending field: the payload path, or the `name:` prefix of a
    /// validation message.
    pub fn field(&self) -> Option<String> {
        match self {
            Error::Payload { path, .. } => Some(path.clone()),
            Error::Validation(m) => m
                .split_once(':')
                .map(|(head, _)| head.trim())
                .filter(|h| !h.is_empty() && !h.contains(' '))
                .map(str::to_string),
            _ => None,
        }
    }
}
