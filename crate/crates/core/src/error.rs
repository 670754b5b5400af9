use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient texture: {found} usable pixels, {needed} template points requested")]
    InsufficientTexture { found: usize, needed: usize },
    #[error("template has no points")]
    EmptyTemplate,
    #[error("particle weights are all zero or non-finite")]
    DegenerateWeights,
    #[error("projected silhouette lies entirely outside the image")]
    EmptyMask,
    #[error("invalid bank grid: {0}")]
    InvalidGrid(String),
    #[error("warped face leaves the image entirely")]
    EmptyOutput,
    #[error("illumination gains must be positive (got {est} and {bank})")]
    InvalidGain { est: f64, bank: f64 },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("empty input")]
    EmptyInput,
    #[error("trace mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid scene script: {0}")]
    InvalidScript(String),
    #[error("occlusion coverage must lie in [0, 1), got {0}")]
    InvalidCoverage(f64),
    #[error("distractor overlaps the primary face's swept region")]
    OverlapError,
    #[error("{stage} stage failed: {source}")]
    StageFailure {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
