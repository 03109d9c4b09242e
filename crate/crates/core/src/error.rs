use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Architecture, config file or CLI setting that cannot be honored.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller-supplied data violates a precondition (shape, labels, emptiness).
    #[error("input error: {0}")]
    Input(String),

    /// A binary file did not parse.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// The math is undefined for this input (all-zero matrix, zero norms).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An operation was called on data that is not in the required state.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    /// Prefixes the message with `ctx`, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Format { offset, msg } => Error::Format {
                offset,
                msg: format!("{ctx}: {msg}"),
            },
            Error::Degenerate(m) => Error::Degenerate(format!("{ctx}: {m}")),
            Error::Precondition(m) => Error::Precondition(format!("{ctx}: {m}")),
            Error::Io(e) => Error::Io(io::Error::new(e.kind(), format!("{ctx}: {e}"))),
        }
    }
}

pub trait ResultExt<T> {
    fn context(self, ctx: impl std::fmt::Display) -> Result<T>;
}

impl<T, E: Into<Error>> ResultExt<T> for std::result::Result<T, E> {
    fn context(self, ctx: impl std::fmt::Display) -> Result<T> {
        self.map_err(|e| e.into().context(ctx))
    }
}
