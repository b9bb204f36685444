use thiserror::Error;

/// Errors raised anywhere in the offline/online pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh request: {0}")]
    InvalidMesh(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("reduced system is singular")]
    SingularReducedSystem,

    #[error("candidate lies in the span of the current basis (remainder ratio {0:.3e})")]
    BasisDegenerate(f64),

    #[error("error trajectory is identically zero")]
    ZeroTrajectory,

    #[error("negative quadratic form {0:.3e} (loss of coercivity or numerical breakdown)")]
    NegativeQuadraticForm(f64),

    #[error("reduced model has no dual space")]
    MissingDual,

    #[error("snapshot cache mismatch: {0}")]
    CacheMismatch(String),

    #[error("{path}:{line}: {message}")]
    Config { path: String, line: usize, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
