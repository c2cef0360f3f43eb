use thiserror::Error;

/// Everything that can go wrong in the reduction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{context}: dimension {len} is odd, canonical coordinates need an even length")]
    OddDimension { context: &'static str, len: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The vector left after symplectic orthogonalization is numerically zero.
    #[error("degenerate vector: residual norm {residual:e} below threshold {threshold:e}")]
    DegenerateVector { residual: f64, threshold: f64 },

    #[error("rank deficient input at column pair {step}: |omega(q, p)| = {alpha:e}")]
    RankDeficient { step: usize, alpha: f64 },

    #[error("singular linear system (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("Newton iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    /// DEIM selection hit a basis column that is dependent on the previous ones.
    #[error("DEIM residual vanished at basis column {column}")]
    ZeroResidual { column: usize },

    #[error("greedy stagnated: every candidate snapshot at parameter index {param_index} lies in the span of the basis")]
    Stagnation { param_index: usize },

    #[error("matrix is not symplectic: residual {residual:e} exceeds {tolerance:e}")]
    NotSymplectic { residual: f64, tolerance: f64 },

    #[error("matrix columns are not orthonormal: residual {residual:e} exceeds {tolerance:e}")]
    NotOrthonormal { residual: f64, tolerance: f64 },

    #[error("DEIM operator was built without canonical index pairing")]
    UnpairedIndices,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

pub(crate) fn check_even(context: &'static str, len: usize) -> Result<()> {
    if len % 2 == 0 {
        Ok(())
    } else {
        Err(Error::OddDimension { context, len })
    }
}
