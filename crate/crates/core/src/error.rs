use thiserror::Error;

use crate::coalition::Coalition;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Unknown names, bad parameters, malformed run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// A linear system could not be solved to the required accuracy.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Weighting scheme violates positivity.
    #[error("invalid weighting: {0}")]
    Validity(String),

    #[error("evaluation of coalition {coalition} failed: {message}")]
    Evaluation { coalition: Coalition, message: String },

    #[error("estimation aborted after {evaluations} evaluations: {source}")]
    PartialFailure {
        evaluations: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// Configuration-type failures map to 2, numeric failures to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            Error::PartialFailure { source, .. } => source.exit_code(),
            Error::Evaluation { .. } => 3,
            _ => 2,
        }
    }
}
