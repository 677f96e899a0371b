use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("audio file not found: {0}")]
    MissingFile(PathBuf),

    #[error("malformed RIFF/WAVE header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("unsupported codec in {path}: {reason}")]
    UnsupportedCodec { path: PathBuf, reason: String },

    #[error("upsampling not supported: input rate {0} Hz is below 8000 Hz")]
    UpsamplingNotSupported(u32),

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scheme mismatch: expected {expected}, found {found}")]
    SchemeMismatch { expected: String, found: String },

    #[error("source mismatch in fusion: {0} vs {1}")]
    SourceMismatch(String, String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch for {name}: expected {expected}, found {found}")]
    ShapeMismatch {
        name: String,
        expected: String,
        found: String,
    },

    #[error("training requires two classes, found only {0:?}")]
    SingleClass(String),

    #[error("class {class:?} has {count} sample(s); at least 2 are required")]
    TooFewClassSamples { class: String, count: usize },

    #[error("too few frames: need {needed}, got {got}")]
    TooFewFrames { needed: usize, got: usize },

    #[error("cannot build {folds} folds: {reason}")]
    Folds { folds: usize, reason: String },

    #[error("statistical test undefined: {0}")]
    DegenerateStatistic(String),

    #[error("empty confusion matrix")]
    EmptyConfusion,

    #[error("ROC requires both classes: {0}")]
    RocSingleClass(String),

    #[error("model container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
