use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the calibration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid wavelength grid: {0}")]
    InvalidGrid(String),

    #[error("wavelength grid mismatch: expected {expected}, found {found}")]
    GridMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(
        "{count} value(s) exceed saturation count {saturation}; first positions: {positions:?}"
    )]
    Saturation {
        saturation: f64,
        count: usize,
        positions: Vec<usize>,
    },

    #[error("target wavelengths not covered by source grid [{source_min}, {source_max}] nm: {uncovered:?}")]
    SpanViolation {
        source_min: f64,
        source_max: f64,
        uncovered: Vec<f64>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid unit: expected {expected}, found {found}")]
    Unit { expected: String, found: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("wavelength {requested} nm has no band within half the local spacing (nearest {nearest} nm)")]
    MissingBand { requested: f64, nearest: f64 },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable identifier for the error variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Saturation { .. } => "saturation",
            Error::SpanViolation { .. } => "span_violation",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Unit { .. } => "unit",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Diverged(_) => "diverged",
            Error::MissingBand { .. } => "missing_band",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
