use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("singular metric: {0}")]
    SingularMetric(String),

    #[error("{what} of size {size} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("not a hypersurface: latent dimension {latent}, ambient dimension {ambient}")]
    NotHypersurface { latent: usize, ambient: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("model file format version {found} is not supported (expected {expected})")]
    ModelVersion { found: String, expected: u32 },

    #[error("model parameter checksum mismatch")]
    ModelChecksum,

    #[error("model file truncated: expected {expected} parameter bytes, found {found}")]
    ModelTruncated { expected: usize, found: usize },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("{path}: row {row}: {msg}")]
    CsvRow {
        path: PathBuf,
        row: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    CsvFormat { path: PathBuf, msg: String },

    #[error("insufficient rows: need {needed}, found {found}")]
    InsufficientRows { needed: usize, found: usize },

    #[error("dataset not found: {0}")]
    DatasetMissing(PathBuf),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers themselves rather than by
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularMetric(_) | Error::NonSymmetric { .. } | Error::Divergence(_)
        )
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dim(what, expected, got))
    }
}
