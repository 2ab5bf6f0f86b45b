use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("k+r exceeds region count: k={k}, r={r}, regions={regions}")]
    SelectionTooLarge { k: usize, r: usize, regions: usize },

    #[error("class id {class_id} out of range for {class_count} classes")]
    ClassOutOfRange { class_id: usize, class_count: usize },

    #[error("degenerate control grid: {0}")]
    DegenerateGrid(String),

    #[error("gamut construction produced {0} bins, expected 313")]
    GamutSize(usize),

    #[error("non-finite loss term {term} = {value}")]
    NonFiniteLoss { term: &'static str, value: f64 },

    #[error("training aborted at step {step}: {source}; last good checkpoint: {}", last_good.as_ref().map_or("none".to_string(), |p| p.display().to_string()))]
    TrainingAborted {
        step: u64,
        last_good: Option<PathBuf>,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint config mismatch: {}", .diffs.join("; "))]
    ConfigMismatch { diffs: Vec<String> },

    #[error("bad checkpoint {path}: {reason}")]
    BadCheckpoint { path: PathBuf, reason: String },

    #[error("missing weights: {0}")]
    MissingWeights(String),

    #[error("empty dataset at {0}")]
    EmptyDataset(PathBuf),

    #[error("manifest error: {0}")]
    Manifest(String),

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

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable tag used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidInput(_) => "invalid-input",
            Error::SelectionTooLarge { .. } => "selection",
            Error::ClassOutOfRange { .. } => "class-range",
            Error::DegenerateGrid(_) => "degenerate-grid",
            Error::GamutSize(_) => "gamut",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::TrainingAborted { .. } => "training-aborted",
            Error::ConfigMismatch { .. } => "config-mismatch",
            Error::BadCheckpoint { .. } => "bad-checkpoint",
            Error::MissingWeights(_) => "missing-weights",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::Manifest(_) => "manifest",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
            Error::Json(_) => "json",
        }
    }
}
