use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the sampling core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A time or other scalar was queried outside the domain of a function.
    Domain { what: &'static str, value: f64 },
    /// An argument violated a documented precondition.
    InvalidArgument(String),
    /// A computation produced or received a non-finite value.
    Numeric(String),
    /// Rejection sampling ran out of proposals.
    BudgetExceeded { trials: u64 },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { what, value } => write!(f, "{what} out of domain: {value}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
            Error::BudgetExceeded { trials } => {
                write!(f, "rejection budget exceeded after {trials} trials")
            }
        }
    }
}

impl core::error::Error for Error {}
