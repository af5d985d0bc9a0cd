use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    Usage(String),

    #[error("invalid system specification: {0}")]
    InvalidSpec(String),

    #[error("point {0:?} lies on a branch boundary")]
    SingularLocus(Vec<f64>),

    #[error("point {0:?} is outside the domain of definition")]
    OutsideDomain(Vec<f64>),

    #[error("trajectory escaped the phase box at step {time}")]
    Escaped { time: usize },

    #[error("point {0:?} has no preimage on the requested branch")]
    NoPreimage(Vec<f64>),

    #[error("a branch must be specified for piecewise-defined systems")]
    BranchRequired,

    #[error("all {samples} sampled initial points escaped")]
    DegenerateCloud { samples: usize },

    #[error("epsilon {epsilon} is below the achievable floor residual {floor}")]
    Saturation { epsilon: f64, floor: f64 },

    #[error("jet lies outside the covering domain: {0}")]
    OutOfDomain(String),

    #[error("multi-index set too large: |E| = {size} exceeds the limit {limit}")]
    TooLarge { size: usize, limit: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
