use thiserror::Error;

/// Errors shared by all modules of the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not symmetric: relative asymmetry {max_asym:.3e} at ({row}, {col}) exceeds 1e-10")]
    NotSymmetric { row: usize, col: usize, max_asym: f64 },

    #[error("matrix is not positive definite: pivot {pivot} is non-positive during factorization")]
    NotPositiveDefinite { pivot: usize },

    #[error("near-singular block: pivot {pivot} below 1e-12 of the largest diagonal; variables {labels:?}")]
    NearSingularBlock { pivot: usize, labels: Vec<String> },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("index {index} appears in both the stressing and stressed sets")]
    OverlappingSets { index: usize },

    #[error("the {side} index set is empty")]
    EmptySet { side: &'static str },

    #[error("quantile {q} outside the open interval (0, 1)")]
    InvalidQuantile { q: f64 },

    #[error("scale parameter must be positive, got {sigma}")]
    NonPositiveScale { sigma: f64 },

    #[error("invalid distribution parameters: {reason}")]
    InvalidParameters { reason: String },

    #[error("degrees of freedom must exceed 2 for a finite covariance, got {nu}")]
    InvalidNu { nu: f64 },

    #[error(
        "top two eigenvalues within relative {gap:.3e}: principal axis ill-defined (threshold 1e-8)"
    )]
    DegenerateTopEigenvalue { gap: f64 },

    #[error("non-positive price {value} at row {row}, column {col}")]
    NonPositivePrice { row: usize, col: usize, value: f64 },

    #[error(
        "sample covariance is rank deficient; most collinear pair: {a} and {b} (correlation {corr:.6})"
    )]
    RankDeficient { a: String, b: String, corr: f64 },

    #[error("mean excess kurtosis {mean_excess:.4} is non-positive; tails are not heavier than normal, fit a normal model instead")]
    KurtosisTooLow { mean_excess: f64 },

    #[error("tickers missing from the group map: {tickers:?}")]
    UnmappedTicker { tickers: Vec<String> },

    #[error("panel has no ticker-to-group map")]
    NoGroups,

    #[error("insufficient observations: need at least p + 2 = {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("operation requires exactly two variables, model has {got}")]
    TwoVariablesRequired { got: usize },

    #[error("invalid group specification: {reason}")]
    GroupsInvalid { reason: String },

    #[error("kernel conditioning retained only {retained} samples after {attempts} batches (need {needed})")]
    KernelRetention {
        retained: usize,
        needed: usize,
        attempts: usize,
    },

    #[error("internal consistency violation: {what}")]
    InternalConsistency { what: String },
}

pub type Result<T> = std::result::Result<T, Error>;
