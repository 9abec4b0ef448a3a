use alloc::string::String;
use core::fmt;

/// Errors raised by the matcher and its supporting modules.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Raster or map dimensions are unusable or disagree.
    Shape(String),
    /// A configuration value is outside its allowed range.
    Config(String),
    /// An operation received an argument outside its domain.
    Domain(String),
    /// No pixels were available to evaluate.
    Empty(String),
    /// Text configuration could not be parsed.
    Parse { line: usize, message: String },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Empty(m) => write!(f, "nothing to evaluate: {m}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
