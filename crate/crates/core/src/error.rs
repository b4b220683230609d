use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the spMVM engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (dimensions, ranges, counts).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The operation does not support the matrix shape it was given.
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    /// Matrix Market input could not be parsed.
    #[error("{}line {line}: {message}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    /// Internal bookkeeping disagrees with itself.
    #[error("internal consistency error: {0}")]
    Internal(String),

    /// A resource (memory, threads) could not be acquired.
    #[error("resource error: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! contract {
    ($cond:expr, $($arg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err($crate::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use contract;
