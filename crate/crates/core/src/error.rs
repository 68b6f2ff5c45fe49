use thiserror::Error;

/// Errors raised by the library.
///
/// Numerical findings such as a failed identity check or a diverging flow are
/// reported through result structs, not through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} is not a positive multiple of {1}")]
    BadDimension(usize, usize),

    #[error("grid size {0} must be even and at least 8")]
    BadGrid(usize),

    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(usize, usize),

    #[error("component layout mismatch: {0}")]
    Layout(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("auxiliary metric is not I-invariant (residual {0:.3e})")]
    NotInvariant(f64),

    #[error("matrix is numerically singular: {0}")]
    Singular(String),

    #[error("per-mode implicit solve is singular at mode ({m1}, {m2}) for step {ds}")]
    SingularModeSolve { m1: i64, m2: i64, ds: f64 },

    #[error("gradient does not match finite differences (relative error {0:.3e})")]
    GradientCheck(f64),

    #[error("fiberwise convexity fails at a sample (min Hessian eigenvalue {0:.3e})")]
    NotConvex(f64),

    #[error("Legendre maximization did not converge after {iterations} iterations (gradient {gradient:.3e})")]
    LegendreNoConvergence { iterations: usize, gradient: f64 },

    #[error("trajectory has {0} samples, need at least 2 in the window")]
    InsufficientSamples(usize),

    #[error("unknown potential kind `{0}`")]
    UnknownPotential(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
