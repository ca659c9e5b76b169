use thiserror::Error;

/// Errors produced by the solvers and data containers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A coefficient row with zero norm has no shape.
    #[error("coefficient row {row} has zero norm")]
    DegenerateRow { row: usize },

    #[error("template {group} has zero norm")]
    DegenerateTemplate { group: usize },

    /// Every covariate of the group has an identically zero design.
    #[error("group {group} has an all-zero design")]
    DegenerateGroup { group: usize },

    #[error("pooled curves have zero variance")]
    ZeroVariance,

    #[error("solver failed at iteration {iteration}: {reason}")]
    SolverFailure { iteration: usize, reason: String },

    #[error("linear system is not solvable: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad input or configuration rather than by a solver.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Config(_) | Error::DimensionMismatch(_)
        )
    }
}
