use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed structured input. `line` is 1-based when known.
    #[error("{origin}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse {
        origin: String,
        line: Option<usize>,
        message: String,
    },

    /// A record parsed but broke one of its invariants.
    #[error("record `{record}`: invalid `{field}`: {message}")]
    Invalid {
        record: String,
        field: String,
        message: String,
    },

    #[error("empty text")]
    EmptyText,

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm embedding")]
    ZeroVector,

    #[error("invalid gallery: {0}")]
    Gallery(String),

    #[error("identification backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("invalid attention map: {0}")]
    AttentionMap(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid parameter `{name}`: {message}")]
    Parameter { name: &'static str, message: String },

    #[error("metric `{metric}`: {message}")]
    Metric {
        metric: &'static str,
        message: String,
    },

    #[error("ids do not align: {0}")]
    Alignment(String),

    /// Wraps an error with the image (and optionally face) it occurred on.
    #[error("image `{image_id}`{}: {source}", face.map(|f| format!(" face #{f}")).unwrap_or_default())]
    Context {
        image_id: String,
        face: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("internal: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(
        record: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Invalid {
            record: record.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parameter(name: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn in_image(self, image_id: &str, face: Option<usize>) -> Self {
        Error::Context {
            image_id: image_id.to_string(),
            face,
            source: Box::new(self),
        }
    }

    /// `true` when the error was caused by bad input rather than a bug.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Internal(_) => false,
            Error::Context { source, .. } => source.is_input_error(),
            _ => true,
        }
    }
}

pub(crate) fn json_error(origin: &str, err: serde_json::Error) -> Error {
    Error::Parse {
        origin: origin.to_string(),
        line: (err.line() > 0).then(|| err.line()),
        message: err.to_string(),
    }
}
