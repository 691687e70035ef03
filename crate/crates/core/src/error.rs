use std::path::PathBuf;

use thiserror::Error;

use crate::data::ClassLabel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("class {0} has zero samples; cannot derive its weight")]
    ZeroClassCount(ClassLabel),

    #[error("class {class} has {count} samples, fewer than k = {k}")]
    InsufficientClassSamples {
        class: ClassLabel,
        count: usize,
        k: usize,
    },

    #[error("class {0} is absent from the evaluated labels")]
    AbsentClass(ClassLabel),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("gradient check failed: max relative error {max_rel_err:e} exceeds {tolerance:e}")]
    GradCheckFailed { max_rel_err: f64, tolerance: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid label value {0}; expected 0, 1 or 2")]
    UnknownLabel(i64),

    #[error("duplicate subject id {0:?}")]
    DuplicateSubject(String),

    #[error("target must be one-hot")]
    NotOneHot,

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("refusing to overwrite {} (pass force to replace it)", .0.display())]
    AlreadyExists(PathBuf),

    #[error("bad magic in {}: expected {expected:?}", path.display())]
    BadMagic {
        path: PathBuf,
        expected: &'static str,
    },

    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("truncated or malformed data in {}: {reason}", path.display())]
    Truncated { path: PathBuf, reason: String },

    #[error("shape inconsistency: {0}")]
    ShapeInconsistent(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input data).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::GradCheckFailed { .. })
    }
}
