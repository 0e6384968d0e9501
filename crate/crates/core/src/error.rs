use thiserror::Error;

/// Errors raised by the analysis, bound, oracle and estimator routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("radius must be non-negative, got {0}")]
    NegativeRadius(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("matrix is zero")]
    ZeroMatrix,

    #[error("small-delta branch unavailable: delta = {delta} >= 0.4")]
    BranchUnavailable { delta: f64 },

    #[error("right singular vectors are not available")]
    VectorsUnavailable,

    #[error("block size {requested} exceeds the {available} available directions")]
    RankExceeded { requested: usize, available: usize },

    #[error("removal direction P e_{index} is zero")]
    UndefinedRemoval { index: usize },

    #[error("atom budget exceeded: {atoms} combinations > {budget}")]
    BudgetExceeded { atoms: f64, budget: f64 },

    #[error("target dimension {0} exceeds the exact-oracle limit of 3")]
    DimensionTooLarge(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("weight vector is not a unit vector (norm {0})")]
    NotUnitVector(f64),

    #[error("no sample fell within the smallest radius {radius}")]
    ZeroHits { radius: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("candidate center set is empty")]
    EmptyCandidates,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
