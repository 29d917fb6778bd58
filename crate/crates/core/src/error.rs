use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("unknown schema `{0}` (expected `crime` or `terror`)")]
    UnknownSchema(String),

    #[error("{path}: header `{found}` does not match expected `{expected}`")]
    HeaderMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {malformed} of {total} rows malformed (limit 10%); first: {first}")]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
        first: String,
    },

    #[error("{path}:{line}: {reason}")]
    BadRecord {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("categories missing from the class map: {}", .0.join(", "))]
    UnmappedCategories(Vec<String>),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("pruning at min_event_fraction={threshold} removed every tile")]
    EverythingPruned { threshold: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("target {0} has no usable in-edges; use the marginal predictor")]
    NoInEdges(String),

    #[error("feature row has {found} columns but the model catalog has {expected}")]
    CatalogMismatch { expected: usize, found: usize },

    #[error("validation slice is empty")]
    EmptySlice,

    #[error("delta {delta} is infeasible for rate {rate}; feasible range is [{min}, {max}]")]
    InfeasiblePerturbation {
        delta: f64,
        rate: f64,
        min: f64,
        max: f64,
    },

    #[error("malformed binary data: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing upstream artifact: {0}")]
    MissingArtifact(String),

    #[error("artifacts in {dir} were produced by a different config (hash {found}, current {expected})")]
    ConfigMismatch {
        dir: PathBuf,
        expected: String,
        found: String,
    },

    #[error("hash mismatch for {path}: manifest says {expected}, file has {found}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("sweep budget exhausted after {completed} of {total} targets; log at {log}")]
    BudgetExceeded {
        completed: usize,
        total: usize,
        log: PathBuf,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for usage, 2 for data problems, 3 for resource
    /// exhaustion.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded { .. } => 3,
            Error::Config(_) | Error::UnknownSchema(_) | Error::MissingArtifact(_) | Error::ConfigMismatch { .. } => 1,
            _ => 2,
        }
    }
}
