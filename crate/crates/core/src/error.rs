use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dataset needs at least {min} case(s) and {min} control(s); found n1={n1}, n0={n0}")]
    EmptyStratum { n1: usize, n0: usize, min: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("weighted design is singular even after ridge escalation")]
    Singular,

    #[error("external signal missing for row {0}")]
    MissingExternal(usize),

    #[error("operation requires exactly {expected} features, got {got}")]
    UnsupportedDimension { expected: usize, got: usize },

    #[error("no rule in the search space meets PPV >= {alpha}")]
    NoFeasibleRule { alpha: f64 },

    #[error("malformed table: {0}")]
    Parse(String),

    #[error("could not draw {wanted} cases from the cohort after {attempts} attempts")]
    InsufficientCases { wanted: usize, attempts: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
