use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("requested {requested} modes but the grid has only {available} interior nodes")]
    TooManyModes { requested: usize, available: usize },

    #[error("resolvent solve for r = {r} did not converge (residual {residual:e})")]
    ResolventBudget { r: f64, residual: f64 },

    #[error("implicit drift solve did not converge after {iterations} iterations (residual {residual:e})")]
    ImplicitSolve { iterations: usize, residual: f64 },

    #[error("trajectory is missing the {0} log needed for this diagnostic")]
    MissingLog(&'static str),

    #[error("need at least {required} paths, got {got}")]
    InsufficientPaths { required: usize, got: usize },

    #[error("all {0} paths failed")]
    AllPathsFailed(usize),

    #[error("{failed} of {total} paths failed, above the 1% cap")]
    FailedPathCap { failed: usize, total: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ResolventBudget { .. }
                | Error::ImplicitSolve { .. }
                | Error::AllPathsFailed(_)
                | Error::FailedPathCap { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
