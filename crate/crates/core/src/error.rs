use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape must have at least one dimension")]
    EmptyShape,
    #[error("dimension {index} of shape {shape:?} is zero")]
    ZeroDim { index: usize, shape: Vec<usize> },
    #[error("shape {shape:?} needs {expected} values, got {got}")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("truncated input while reading {0}")]
    Truncated(&'static str),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("dtype mismatch: file holds {found}, requested {requested}")]
    DtypeMismatch {
        found: &'static str,
        requested: &'static str,
    },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("missing entry {0:?}")]
    MissingEntry(String),
    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("modality mask is empty")]
    EmptyMask,
    #[error("modality {0} is marked available but no image was provided")]
    MissingModalityImage(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("image has zero variance after clipping")]
    ZeroVariance,
    #[error("class {0} does not occur anywhere in the dataset")]
    ClassAbsent(usize),
    #[error("could not place a non-degenerate lesion after {0} attempts")]
    GeometryRetriesExhausted(usize),
    #[error("no imputation model for target {target} given available set {available:#b}")]
    MissingImputationModel { target: usize, available: u32 },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("{0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: &[usize], got: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }
}
