use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("box {w}x{h} does not fit in a {patch}x{patch} patch")]
    BoxTooLarge { w: usize, h: usize, patch: usize },

    #[error("scene {width}x{height} is smaller than the {patch}x{patch} patch")]
    SceneTooSmall {
        width: usize,
        height: usize,
        patch: usize,
    },

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("crop {w}x{h} is below the {min}px minimum")]
    CropTooSmall { w: usize, h: usize, min: usize },

    #[error("value outside the probability domain: {0}")]
    Domain(String),

    #[error("non-finite value detected in {component}")]
    NanDetected { component: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("image error in {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn nan(component: impl Into<String>) -> Self {
        Error::NanDetected {
            component: component.into(),
        }
    }
}
