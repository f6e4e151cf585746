use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid space `{space}`: {reason}")]
    InvalidSpace { space: String, reason: String },
    #[error("invalid weights for `{space}`: {reason}")]
    InvalidWeights { space: String, reason: String },
    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),
    #[error("axis subset is empty")]
    EmptySubset,
    #[error("axis index {index} out of range for {rank} axes")]
    IndexOutOfRange { index: usize, rank: usize },
    #[error("axis subset must be strictly increasing")]
    UnorderedSubset,
    #[error("marginal mismatch on axis {axis}: max deviation {max_deviation:e}")]
    MarginalMismatch { axis: usize, max_deviation: f64 },
    #[error("map undefined at positive-mass atom {0:?}")]
    MapDomainGap(Vec<usize>),
    #[error("instance has {cells} cells, cap is {cap}")]
    InstanceTooLarge { cells: usize, cap: usize },
    #[error("cost is not finite at {0:?}")]
    NonFiniteCost(Vec<usize>),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("reduced problems need at least two axes, got {0}")]
    SubsetTooSmall(usize),
    #[error("subset must be a proper subset of the axes")]
    SubsetNotProper,
    #[error("potentials violate dual feasibility by {0:e}")]
    InfeasiblePotentials(f64),
    #[error("reduced plan on axes (1, {0}) is not a graph over axis 1")]
    NotAGraph(usize),
    #[error("matrix is singular (|det| = {0:e})")]
    SingularMatrix(f64),
    #[error("twist parameter xi must be nonzero")]
    ZeroXi,
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("conjugate table has no samples")]
    EmptyTable,
    #[error("operation requires the surplus cost")]
    NotSurplusCost,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    /// Numerical or solver failures, as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InstanceTooLarge { .. }
                | Error::NonFiniteCost(_)
                | Error::InfeasiblePotentials(_)
                | Error::NotAGraph(_)
                | Error::SingularMatrix(_)
                | Error::Solver(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
