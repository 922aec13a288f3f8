use thiserror::Error;

#[derive(Debug, Error)]
pub enum EdvrError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("frames: {0}")]
    Frames(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, EdvrError>;

/// Bail out with `EdvrError::Shape(format!(..))`.
macro_rules! shape_bail {
    ($($arg:tt)*) => {
        return Err($crate::error::EdvrError::Shape(format!($($arg)*)))
    };
}

/// Check a shape/layout precondition, bailing with a formatted message.
macro_rules! ensure_shape {
    ($cond:expr, $($arg:tt)*) => {
        if !($cond) {
            return Err($crate::error::EdvrError::Shape(format!($($arg)*)));
        }
    };
}

macro_rules! config_bail {
    ($($arg:tt)*) => {
        return Err($crate::error::EdvrError::Config(format!($($arg)*)))
    };
}

macro_rules! ensure_config {
    ($cond:expr, $($arg:tt)*) => {
        if !($cond) {
            return Err($crate::error::EdvrError::Config(format!($($arg)*)));
        }
    };
}

pub(crate) use {config_bail, ensure_config, ensure_shape, shape_bail};
