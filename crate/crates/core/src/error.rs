use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown distribution `{0}` (expected uniform-ball or uniform-sphere-scaled)")]
    UnknownDistribution(String),

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("instance too large for exhaustive enumeration: {partitions} partitions exceed the limit of {limit}")]
    TooLarge { partitions: u128, limit: u128 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure in LP solver: {0}")]
    Numerical(String),

    #[error("unequal cluster sizes: certificates require n points per cluster")]
    UnequalClusters,

    #[error("empty tau grid")]
    EmptyTauGrid,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
