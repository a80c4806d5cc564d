use thiserror::Error;

/// Errors raised by the mechanism algebra, solvers, simulators and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),

    #[error("non-conservative branching mechanism: {0}")]
    NonConservative(String),

    #[error("uniqueness hypothesis violated: {0}")]
    Uniqueness(String),

    #[error("solver failure at s = {at}: {reason}")]
    Solver { at: f64, reason: String },

    #[error("method inapplicable: {0}")]
    Inapplicable(String),

    #[error("incompatible scheme: {0}")]
    IncompatibleScheme(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
