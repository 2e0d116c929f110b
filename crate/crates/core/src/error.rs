use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or out-of-domain input.
    #[error("invalid input: {0}")]
    Input(String),

    /// A factorization failed even after jitter escalation.
    #[error("numerical failure in {context}: factorization failed at jitter {jitter:e} (condition estimate {condition:e})")]
    Numerical {
        context: String,
        jitter: f64,
        condition: f64,
    },

    /// A caller-asserted precondition does not hold.
    #[error("contract violated: {0}")]
    Contract(String),

    /// The flat-top kernel failed its own moment certificate.
    #[error("flat-top kernel construction failed: moment of order {order} is {value:e} (tolerance {tolerance:e})")]
    Construction {
        order: usize,
        value: f64,
        tolerance: f64,
    },

    /// Too many sweep cells failed numerically.
    #[error("{failed} of {total} cells failed, above the 10% abort threshold")]
    FailureThreshold { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
