use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("spatial dimensions must be even, got {height}x{width}")]
    OddSpatialDim { height: usize, width: usize },
    #[error("dropout rate must be in [0, 1), got {0}")]
    BadRate(f64),

    #[error("no mask found for image `{0}`")]
    MissingMask(String),
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("unsupported pixel depth {0:?}; expected 8-bit samples")]
    UnsupportedDepth(String),
    #[error("split ratios must sum to 1, got {0}")]
    BadRatios(f64),

    #[error("weight `{0}` is missing from the archive")]
    MissingWeight(String),
    #[error("weight `{name}` has shape {found:?}, expected {expected:?}")]
    WeightShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error("truncated payload for `{name}`: need {needed} bytes, have {available}")]
    TruncatedPayload {
        name: String,
        needed: usize,
        available: usize,
    },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("confusion counts are empty")]
    EmptyCounts,
    #[error("true class {0} has no pixels")]
    EmptyRow(usize),

    #[error("split manifest not found: {0}")]
    MissingSplitManifest(String),
    #[error("unknown sample id `{0}`")]
    UnknownSample(String),
    #[error("schema error: {0}")]
    Schema(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Stable machine-readable tag used on the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::OddSpatialDim { .. } => "OddSpatialDim",
            Error::BadRate(_) => "BadRate",
            Error::MissingMask(_) => "MissingMask",
            Error::DuplicateId(_) => "DuplicateId",
            Error::EmptyDataset => "EmptyDataset",
            Error::Decode { .. } => "DecodeError",
            Error::UnsupportedDepth(_) => "UnsupportedDepth",
            Error::BadRatios(_) => "BadRatios",
            Error::MissingWeight(_) => "MissingWeight",
            Error::WeightShapeMismatch { .. } => "WeightShapeMismatch",
            Error::CorruptArchive(_) => "CorruptArchive",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::EmptyCounts => "EmptyCounts",
            Error::EmptyRow(_) => "EmptyRow",
            Error::MissingSplitManifest(_) => "MissingSplitManifest",
            Error::UnknownSample(_) => "UnknownSample",
            Error::Schema(_) => "SchemaError",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}
