use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimension {0} (need 3 <= d <= {max})", max = crate::lattice::MAX_DIM)]
    UnsupportedDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty set")]
    EmptySet,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("requested tolerance {requested:e} not reached (width {achieved:e}); increase truncation ({hint})")]
    Truncation {
        requested: f64,
        achieved: f64,
        hint: &'static str,
    },

    #[error("Gram matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("equilibrium component {value:e} at site {site} is below -{tol:e}; Green values are inaccurate")]
    NegativeEquilibrium { site: String, value: f64, tol: f64 },

    #[error("centers are not {min_distance}-separated: {a} and {b}")]
    NotSeparated {
        a: String,
        b: String,
        min_distance: f64,
    },

    #[error("no successful draw within {draws} attempts")]
    RetryLimit { draws: usize },

    #[error("threshold total {total} exceeds the cap of {cap}")]
    ThresholdCap { total: u32, cap: u32 },

    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("cache rejected: {0}")]
    Cache(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
