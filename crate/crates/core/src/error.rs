use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NIfTI header field `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("unsupported NIfTI data: {0}")]
    UnsupportedType(String),

    #[error("expected a {expected}-dimensional image, found dim[0] = {found}")]
    Dimensionality { expected: usize, found: i16 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("volume has zero variance (constant intensity {value})")]
    ConstantVolume { value: f64 },

    #[error("augmentation kind `{0}` cannot be applied to a label volume")]
    InvalidKind(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{what} {value} out of range {range}")]
    Range {
        what: &'static str,
        value: i64,
        range: String,
    },

    #[error("missing prerequisite pool `{provenance}`: {reason}")]
    Dependency { provenance: String, reason: String },

    #[error("model runner failed ({status}):\n{output}")]
    Runner { status: String, output: String },

    #[error("validation failed for case `{case}`: {reason}")]
    Validation { case: String, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            field,
            reason: reason.into(),
        }
    }
}
