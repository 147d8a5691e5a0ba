use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("vector has zero norm")]
    ZeroNormVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vectors are antipodal (angle {angle} rad); rotation plane is undefined")]
    AntipodalVectors { angle: f64 },

    #[error("sequence length mismatch: {left} vs {right}")]
    SequenceLengthMismatch { left: usize, right: usize },

    #[error("checkpoint steps differ between series")]
    StepMismatch,

    #[error("adjustment failed at {} position(s): {}", .0.len(), format_positions(.0))]
    PositionErrors(Vec<(usize, Error)>),

    #[error("sets are index-paired but have sizes {left} and {right}")]
    PairingMismatch { left: usize, right: usize },

    #[error("empty set")]
    EmptySet,

    #[error("need at least {required} points, got {found}")]
    InsufficientPoints { required: usize, found: usize },

    #[error("covariance is singular even after regularization ({0})")]
    SingularCovariance(String),

    #[error("index {index} out of range for length {len}")]
    IndexError { index: usize, len: usize },

    #[error("label `{label}` not found{}", .step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    LabelNotFound { label: String, step: Option<u64> },

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),

    #[error("malformed template{}: {reason}", .line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    MalformedTemplate { line: Option<usize>, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt data file {path}: expected {expected} bytes, found {actual}")]
    CorruptData { path: PathBuf, expected: u64, actual: u64 },

    #[error("unsupported manifest version {0}")]
    UnsupportedVersion(u64),

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (degenerate geometry, singular
    /// statistics) as opposed to bad inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::ZeroNormVector | Error::AntipodalVectors { .. } | Error::SingularCovariance(_) => true,
            Error::PositionErrors(errs) => errs.iter().all(|(_, e)| e.is_numerical()),
            _ => false,
        }
    }
}

fn format_positions(errs: &[(usize, Error)]) -> String {
    errs.iter()
        .map(|(i, e)| format!("[{i}] {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}
