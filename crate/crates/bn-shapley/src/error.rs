use std::path::PathBuf;

use bn_shapley_core::data::DataError;
use bn_shapley_core::inference::{InferenceError, PriorError};
use bn_shapley_core::model::GraphError;
use bn_shapley_core::mu_sa::MuSaError;
use bn_shapley_core::shapley::ShapleyError;
use bn_shapley_core::simgen::SimError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at {line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },
    #[error("invalid network: {0}")]
    Graph(#[from] GraphError),
    #[error("invalid parameters: {0}")]
    Theta(String),
    #[error("data row {row}: {message}")]
    DataRow { row: usize, message: String },
    #[error("data header: {0}")]
    HeaderMismatch(String),
    #[error("data row {row}, column `{column}`: `{cell}` is not a number")]
    NonNumericCell { row: usize, column: String, cell: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("draws file checksum does not match its column header")]
    ChecksumMismatch,
    #[error("report does not match the network: {0}")]
    ReportGraphMismatch(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Shapley(#[from] ShapleyError),
    #[error(transparent)]
    MuSa(#[from] MuSaError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Stable identifier for machine consumers.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::Graph(_) => "invalid_graph",
            Error::Theta(_) => "invalid_theta",
            Error::DataRow { .. } | Error::Data(_) => "invalid_data",
            Error::HeaderMismatch(_) => "header_mismatch",
            Error::NonNumericCell { .. } => "non_numeric_cell",
            Error::ChecksumMismatch => "checksum_mismatch",
            Error::ReportGraphMismatch(_) => "report_graph_mismatch",
            Error::Inference(_) => "inference",
            Error::Prior(_) => "invalid_prior",
            Error::Shapley(_) => "shapley",
            Error::MuSa(_) => "mu_sa",
            Error::Sim(_) => "simulation",
            Error::Usage(_) => "usage",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(e: serde_json::Error) -> Self {
        Error::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
