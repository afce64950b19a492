use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// A protocol configuration failed validation.
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    /// An averaging pipeline received no kept traces.
    #[error("no kept traces to average")]
    EmptyInput,

    /// An operation was called in a context where it has no meaning.
    #[error("misuse: {0}")]
    Misuse(&'static str),

    /// An iterative fit did not converge.
    #[error("fit failed after {iterations} iterations (cost {cost:.3e}): {reason}")]
    FitFailure {
        iterations: usize,
        cost: f64,
        reason: String,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Config {
        field,
        reason: reason.into(),
    }
}
