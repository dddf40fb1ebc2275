use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("exhaustive search over {combos} beams exceeds the cap of {cap}")]
    EnumerationCap { combos: u128, cap: u128 },

    #[error("user position ({x}, {y}) lies outside the user grid")]
    OutsideGrid { x: f64, y: f64 },

    #[error("parse error in {source_name} at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("user sets differ between reports '{left}' and '{right}'")]
    UserSetMismatch { left: String, right: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(source_name: impl Into<String>, err: serde_json::Error) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
