use std::path::PathBuf;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum VsfError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// `row` and `col` are 1-based positions in the data rows (header excluded).
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("input contains no data")]
    EmptyInput,

    #[error("scale factor must be positive and finite, got {0}")]
    InvalidFactor(f64),

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("all values are identical; standard deviation is zero")]
    DegenerateSeries,

    #[error("subset percentage must lie strictly between 0 and 100, got {0}")]
    InvalidPercent(f64),

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("distance exponent must be positive and finite, got {0}")]
    InvalidExponent(f64),

    #[error("retrieval corpus has {available} instances, {needed} required")]
    CorpusTooSmall { needed: usize, available: usize },

    #[error("no clusters available for correlated sampling")]
    NoClusters,

    #[error("normal equations are singular")]
    SingularSystem,

    #[error("range retrieval found no candidates after {rounds} rounds")]
    Exhausted { rounds: usize },

    #[error("expected {expected} neighbors, got {actual}")]
    NeighborCountMismatch { expected: usize, actual: usize },

    #[error("oracle error is zero; relative delta undefined")]
    ZeroOracle,

    #[error("weighting scheme {0} does not induce a ranking")]
    UnsupportedScheme(String),

    #[error("model has not been fitted")]
    NotFitted,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VsfError {
    /// Stable short identifier, used for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            VsfError::Io { .. } => "io",
            VsfError::Parse { .. } => "parse",
            VsfError::EmptyInput => "empty_input",
            VsfError::InvalidFactor(_) => "invalid_factor",
            VsfError::TooShort(_) => "too_short",
            VsfError::DegenerateSeries => "degenerate_series",
            VsfError::InvalidPercent(_) => "invalid_percent",
            VsfError::InvalidSubset(_) => "invalid_subset",
            VsfError::ShapeMismatch(_) => "shape_mismatch",
            VsfError::InvalidExponent(_) => "invalid_exponent",
            VsfError::CorpusTooSmall { .. } => "corpus_too_small",
            VsfError::NoClusters => "no_clusters",
            VsfError::SingularSystem => "singular_system",
            VsfError::Exhausted { .. } => "exhausted",
            VsfError::NeighborCountMismatch { .. } => "neighbor_count_mismatch",
            VsfError::ZeroOracle => "zero_oracle",
            VsfError::UnsupportedScheme(_) => "unsupported_scheme",
            VsfError::NotFitted => "not_fitted",
            VsfError::InvalidConfig(_) => "invalid_config",
            VsfError::Json(_) => "json",
        }
    }
}

pub type Result<T, E = VsfError> = std::result::Result<T, E>;
