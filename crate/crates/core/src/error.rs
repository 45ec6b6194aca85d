use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("eigendecomposition did not converge")]
    NoConvergence,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{what} count {count} exceeds configured cap {cap}")]
    CapExceeded {
        what: &'static str,
        count: usize,
        cap: usize,
    },

    #[error("unknown name '{0}'")]
    UnknownName(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("observed Bell value {value} is not attainable at level {level} (level bound {bound})")]
    UnattainableValue { value: f64, level: usize, bound: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
