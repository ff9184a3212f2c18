use thiserror::Error;

use crate::cube::CubeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value {value} at sample {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("value {value} at sample {index} outside [{lo}, {hi}]")]
    OutOfRange {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image {width}x{height} is smaller than the required {min}x{min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("channel {channel} has zero mean; gray-world balance is undefined")]
    ZeroChannelMean { channel: usize },

    #[error("unknown Bayer pattern {0:?}")]
    UnknownPattern(String),

    #[error(transparent)]
    Cube(#[from] CubeError),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
