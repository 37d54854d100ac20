use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable file {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("zero-area image")]
    ZeroArea,

    #[error("requested size {req_w}x{req_h} exceeds source {src_w}x{src_h}")]
    ClipTooLarge {
        req_w: usize,
        req_h: usize,
        src_w: usize,
        src_h: usize,
    },

    #[error("invalid embedding rate {0}: must lie in (0, 1]")]
    InvalidRate(f64),

    #[error("duplicate image id `{0}`")]
    DuplicateId(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("image `{id}` too small for order-{order} features ({width}x{height})")]
    ImageTooSmall {
        id: String,
        width: usize,
        height: usize,
        order: usize,
    },

    #[error("feature extraction failed for `{id}`: {source}")]
    Extraction {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("single-class input: both classes must be present")]
    SingleClass,

    #[error("class too small for {folds}-fold stratification (smallest class has {size})")]
    ClassTooSmall { folds: usize, size: usize },

    #[error("non-finite feature value")]
    NonFinite,

    #[error("need at least {required} images, got {got}")]
    TooFewImages { required: usize, got: usize },

    #[error("degenerate partition: predicted cover and stego centroids coincide")]
    DegeneratePartition,

    #[error("empty input")]
    EmptyInput,

    #[error("image `{0}` has never been classified")]
    NeverClassified(String),

    #[error("corpus exhausted: need {needed} images, corpus has {available}")]
    CorpusExhausted { needed: usize, available: usize },

    #[error("truth/id mismatch: {0}")]
    TruthMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
