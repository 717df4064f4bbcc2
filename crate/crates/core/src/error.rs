use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into configuration problems (bad parameters, unsupported
/// combinations) and data problems (malformed files, dimension mismatches),
/// which the command-line front end maps onto distinct exit codes.
#[derive(Debug, Error)]
pub enum NwcError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown kernel `{0}` (expected one of: boxcar, gaussian, epanechnikov, quartic, triweight, tricube, cosine)")]
    UnknownKernel(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("partition would be empty: {0}")]
    EmptyPartition(String),

    #[error("duplicate samples {first} and {second} share a label and location; no nonzero same-label distance exists")]
    CoincidentPair { first: usize, second: usize },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("every bandwidth evaluation abstained; smallest nearest-neighbour distance from validation to training is {min_nn_distance}")]
    AllAbstained { min_nn_distance: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NwcError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        NwcError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the caller's configuration rather than by
    /// the data being processed.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            NwcError::InvalidParameter { .. }
                | NwcError::UnknownKernel(_)
                | NwcError::Unsupported(_)
                | NwcError::Capacity(_)
                | NwcError::Infeasible(_)
        )
    }
}

pub type Result<T, E = NwcError> = std::result::Result<T, E>;
