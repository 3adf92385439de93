use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("block {block} is empty; every block needs at least one node")]
    EmptyBlock { block: usize },

    #[error("adjacency matrix is all zeros")]
    ZeroAdjacency,

    #[error("induced graph has zero norm (all feature scores vanish on the data)")]
    ZeroInducedGraph,

    #[error("row {row} of the {which} image matrix sums to zero")]
    ZeroImageRow { which: &'static str, row: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("projected step left no positive coordinate (step size {eta} is too large)")]
    DegenerateStep { eta: f64 },

    #[error("only {nnz} nonzero feature scores, cannot select {d} features")]
    InsufficientSupport { nnz: usize, d: usize },

    #[error("negative feature value {value} at row {row}, column {col}")]
    NegativeFeature { row: usize, col: usize, value: f64 },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("no labels available for this network")]
    MissingLabels,

    #[error("candidate set is empty")]
    EmptyCandidateSet,

    #[error("could not perturb allocation without emptying a block after {attempts} attempts")]
    PerturbationFailed { attempts: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
