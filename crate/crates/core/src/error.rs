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

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("tensor format error: {0}")]
    Format(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFiniteValue { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("invalid number of components: {0}")]
    InvalidComponents(String),

    #[error("empty task list")]
    EmptyList,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("weights are not normalized (sum = {0})")]
    UnnormalizedWeights(f64),

    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("weighted-average requested but no task accuracy table is available (baselines were skipped)")]
    MissingAccuracyTable,

    #[error("no reports to aggregate")]
    EmptyReports,

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// True for errors caused by the caller's request rather than the data on disk.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::MissingAccuracyTable
                | Error::Usage(_)
                | Error::EmptyList
                | Error::InvalidComponents(_)
                | Error::Domain(_)
                | Error::UnnormalizedWeights(_)
        )
    }
}

impl Error {
    /// Stable variant name, used as the tag of CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::MissingFile(_) => "MissingFile",
            Error::Parse(_) => "Parse",
            Error::Format(_) => "Format",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::TooFewSamples(_) => "TooFewSamples",
            Error::SingularSystem(_) => "SingularSystem",
            Error::InvalidComponents(_) => "InvalidComponents",
            Error::EmptyList => "EmptyList",
            Error::Domain(_) => "Domain",
            Error::UnnormalizedWeights(_) => "UnnormalizedWeights",
            Error::ZeroNorm(_) => "ZeroNorm",
            Error::Config(_) => "Config",
            Error::MissingAccuracyTable => "MissingAccuracyTable",
            Error::EmptyReports => "EmptyReports",
            Error::Usage(_) => "Usage",
        }
    }

    /// Process exit status for this error: 1 for usage, 2 for data.
    pub fn exit_code(&self) -> i32 {
        if self.is_usage() {
            1
        } else {
            2
        }
    }
}
