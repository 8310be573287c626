use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller passed arguments that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Input data is well formed but inconsistent (e.g. conflicting duplicates).
    #[error("data error: {0}")]
    Data(String),

    #[error("query budget exhausted: {0}")]
    Budget(String),

    /// No unmeasured sequence is left to propose.
    #[error("domain exhausted after {measured} measurements")]
    Exhausted { measured: usize },

    /// A sequence outside the landscape's domain was queried.
    #[error("sequence {sequence} is not in the landscape domain")]
    Domain { sequence: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("training diverged for ensemble member {member}: {message}")]
    Training { member: usize, message: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
