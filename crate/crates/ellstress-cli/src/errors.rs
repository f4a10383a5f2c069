use thiserror::Error;

/// Process exit codes: 0 success, 2 input error, 3 numerical error,
/// 4 partial failure (some matrix cells errored).
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Numerical(String),

    #[error("{failed} matrix cell(s) failed; see the emitted JSON metadata")]
    Partial { failed: usize },
}

impl AppError {
    pub fn input(msg: impl Into<String>) -> Self {
        AppError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Input(_) => EXIT_INPUT,
            AppError::Numerical(_) => EXIT_NUMERICAL,
            AppError::Partial { .. } => EXIT_PARTIAL,
        }
    }
}

impl From<ellstress::Error> for AppError {
    fn from(e: ellstress::Error) -> Self {
        use ellstress::Error as E;
        match e {
            // Problems with what the user supplied.
            E::InvalidQuantile { .. }
            | E::NonPositivePrice { .. }
            | E::UnmappedTicker { .. }
            | E::NoGroups
            | E::InsufficientData { .. }
            | E::DimensionMismatch { .. }
            | E::IndexOutOfRange { .. }
            | E::OverlappingSets { .. }
            | E::EmptySet { .. }
            | E::GroupsInvalid { .. }
            | E::TwoVariablesRequired { .. }
            | E::InvalidNu { .. }
            | E::NonPositiveScale { .. }
            | E::InvalidParameters { .. } => AppError::Input(e.to_string()),
            // Problems the numbers ran into.
            E::NotSymmetric { .. }
            | E::NotPositiveDefinite { .. }
            | E::NearSingularBlock { .. }
            | E::RankDeficient { .. }
            | E::DegenerateTopEigenvalue { .. }
            | E::KurtosisTooLow { .. }
            | E::KernelRetention { .. }
            | E::InternalConsistency { .. } => AppError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Input(format!("io error: {e}"))
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Input(format!("csv error: {e}"))
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Input(format!("json error: {e}"))
    }
}

pub type AppResult<T> = Result<T, AppError>;
