use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid capacity: {0}")]
    InvalidCapacity(String),

    #[error("allocation {allocation} is outside capacity {capacity}")]
    AllocationOutOfRange { allocation: String, capacity: String },

    #[error("cell index {index} is outside a grid of {cells} cells")]
    CellOutOfRange { index: usize, cells: usize },

    #[error("capacity mismatch: expected {expected}, found {found}")]
    CapacityMismatch { expected: String, found: String },

    #[error("capacity mismatch for agent `{agent}`: expected {expected}, found {found}")]
    AgentCapacityMismatch {
        agent: String,
        expected: String,
        found: String,
    },

    #[error("invalid valuation tensor: {0}")]
    InvalidTensor(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("query handle belongs to a different index")]
    StaleHandle,

    #[error("k-d tree over {vectors} vectors of {dims} dimensions needs {entries} entries (limit {max_entries})")]
    KdTreeTooLarge {
        vectors: usize,
        dims: usize,
        entries: usize,
        max_entries: usize,
    },

    #[error("auction needs at least one bid")]
    NoBids,

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid cost file: {0}")]
    CostFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
