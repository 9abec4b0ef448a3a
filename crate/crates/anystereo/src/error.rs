use thiserror::Error;

/// Errors from file formats and command plumbing.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed bytes; `offset` is where decoding gave up.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("calibration: {0}")]
    Calib(String),
    #[error(transparent)]
    Core(#[from] anystereo_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn format_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset,
        message: message.into(),
    })
}
