use std::io;

use thiserror::Error;

/// Errors produced by the traversal library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A non-finite objective or gradient was produced. `iterate` counts
    /// evaluations of the solver (0 is the starting point).
    #[error("numerical failure at iterate {iterate}: {detail}")]
    NumericalFailure { iterate: usize, detail: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no matching regularizer: {0}")]
    NoMatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Prefix the message with some context, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{ctx}: {m}")),
            Error::NumericalFailure { iterate, detail } => Error::NumericalFailure {
                iterate,
                detail: format!("{ctx}: {detail}"),
            },
            Error::Format(m) => Error::Format(format!("{ctx}: {m}")),
            Error::DegenerateData(m) => Error::DegenerateData(format!("{ctx}: {m}")),
            Error::Precondition(m) => Error::Precondition(format!("{ctx}: {m}")),
            Error::NoMatch(m) => Error::NoMatch(format!("{ctx}: {m}")),
            Error::Io(e) => Error::Io(io::Error::new(e.kind(), format!("{ctx}: {e}"))),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
