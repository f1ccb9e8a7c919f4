use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invariant violated for sample {sample_id}: {field}")]
    InvariantViolation { sample_id: String, field: String },
    #[error("duplicate sample id {0}")]
    DuplicateId(String),
    #[error("template store holds mixed template kinds or layouts")]
    MixedKinds,
    #[error("malformed template store: {0}")]
    Format(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("iriscode layouts or kinds differ")]
    LayoutMismatch,
    #[error("no shift leaves enough jointly valid bits")]
    InsufficientOverlap,
    #[error("no template for sample {0}")]
    MissingTemplate(String),
    #[error("sample {0} has no annotation")]
    MissingAnnotation(String),
    #[error("bounding box does not overlap the image")]
    NoOverlap,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("split needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("protocol {protocol}: empty candidate pool ({constraint})")]
    EmptyPool {
        protocol: String,
        constraint: String,
    },
    #[error("invalid protocol: {0}")]
    InvalidSpec(String),
    #[error("FAR target needs at least {needed} impostor scores, have {available}")]
    InsufficientImpostors { needed: usize, available: usize },
    #[error("no genuine scores")]
    EmptyGenuine,
    #[error("empty gallery")]
    EmptyGallery,
    #[error("invalid image reference {0}")]
    ImageRef(String),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invariant(sample_id: &str, field: impl Into<String>) -> Self {
        Error::InvariantViolation {
            sample_id: sample_id.to_string(),
            field: field.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
