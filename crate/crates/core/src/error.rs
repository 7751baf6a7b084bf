use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data violates a documented precondition.
    #[error("invalid input: {0}")]
    Input(String),
    /// The simplex solver could not finish (iteration cap, numerical breakdown).
    #[error("LP solver failure: {0}")]
    Solver(String),
    /// An internal invariant was broken; indicates a bug.
    #[error("internal error: {0}")]
    Internal(String),
    /// A trajectory reached an inconsistent state.
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
