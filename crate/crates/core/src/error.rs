use thiserror::Error;

/// Which copy of a sample point the query coincides with: `+X_k` or `-X_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sign::Plus => write!(f, "+"),
            Sign::Minus => write!(f, "-"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpcaError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("data set must have at least one row and one column")]
    EmptyData,

    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("ragged input: row {row} has {got} entries, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },

    #[error("query point coincides with {sign}X_{index}")]
    SamplePointHit { index: usize, sign: Sign },

    #[error("index {index} out of range for {n} observations")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("every observation is the zero vector")]
    AllZeroData,

    #[error("step scale undefined: every term excluded")]
    UndefinedScale,

    #[error("escape backtracking exhausted after {trials} shrinks")]
    BacktrackExhausted { trials: usize },

    #[error("search direction is parallel to observation {index}")]
    DirectionAtSamplePoint { index: usize },

    #[error("sample covariance is degenerate")]
    DegenerateData,

    #[error("quadrature did not reach tolerance {tol:e} (estimate {estimate:e})")]
    QuadratureNonConvergence { tol: f64, estimate: f64 },

    #[error("closed form available only for p in {{2, 3, 4}}, got p = {0}")]
    UnsupportedDim(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("required moment of the radial law is infinite: {0}")]
    NonFiniteMoment(String),

    #[error("population norm must be positive, got {0}")]
    InvalidPsi(f64),

    #[error("vector must be nonzero")]
    ZeroVector,

    #[error("fitted norm {norm} exceeds the radius bound {bound}")]
    RadiusViolation { norm: f64, bound: f64 },
}

pub type Result<T> = std::result::Result<T, SpcaError>;
