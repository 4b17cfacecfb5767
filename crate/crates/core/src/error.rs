use thiserror::Error;

/// Failures raised by the numeric layer.
///
/// Messages are stable: callers and tests match on the leading phrase.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("divergent: {0}")]
    Divergent(String),
    #[error("tail not negligible: bound {bound:e} exceeds tolerance {tol:e}")]
    TailNotNegligible { bound: f64, tol: f64 },
    #[error("tail undecidable: {0}")]
    TailUndecidable(String),
    #[error("energy overflow at index {0}")]
    EnergyOverflow(usize),
    #[error("monotonicity violation in inputs: {0}")]
    Monotonicity(String),
    #[error("operator numerically zero at index {0}")]
    OperatorZero(usize),
    #[error("collection too small: {0}")]
    CollectionTooSmall(String),
    #[error("N < 2: {0}")]
    GridDegenerate(String),
    #[error("bracket failure: {0}")]
    Bracket(String),
    #[error("grid too short: {0} points, need at least 5")]
    GridTooShort(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by malformed input rather than by numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::GridTooShort(_) | Error::Schema(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
