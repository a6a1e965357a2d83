use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A matrix function was applied outside its domain, e.g. the logarithm
    /// of a matrix that is not positive definite.
    #[error("matrix outside domain (min eigenvalue {min_eigenvalue:e})")]
    Domain { min_eigenvalue: f64 },

    #[error("no positive semidefinite CARE solution found (best residual {residual:e}): {reason}")]
    NoSolution { residual: f64, reason: String },

    #[error("degenerate equation: {0}")]
    Degenerate(String),

    #[error("no real solution (radicand {radicand:e})")]
    NoRealSolution { radicand: f64 },

    #[error("unknown validation suite `{name}`; available: {available}")]
    UnknownSuite { name: String, available: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
