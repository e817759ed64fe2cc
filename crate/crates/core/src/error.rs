use alloc::string::String;
use core::fmt;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand extents do not agree.
    Shape { op: &'static str, detail: String },
    /// A documented precondition was violated by the caller.
    Contract(String),
    /// Input for which the operation is undefined (e.g. normalizing a zero vector).
    Degenerate(&'static str),
    /// An operation produced NaN or infinity.
    NonFinite(&'static str),
    /// Malformed external data: wrong sample rate, token out of range, bad file.
    Format(String),
    /// A configuration value failed to parse or validate.
    Config { key: String, reason: String },
    /// A configuration key that is not recognised.
    UnknownKey(String),
    /// A named parameter required by the model is absent.
    MissingTensor(String),
    /// Input pushed into a session after `flush`.
    SessionClosed,
    /// Training produced a non-finite loss.
    Diverged { stage: u8, step: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "dimension error in {op}: {detail}"),
            Error::Contract(msg) => write!(f, "contract violated: {msg}"),
            Error::Degenerate(what) => write!(f, "degenerate input: {what}"),
            Error::NonFinite(op) => write!(f, "non-finite value produced by {op}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Config { key, reason } => write!(f, "invalid config value for `{key}`: {reason}"),
            Error::UnknownKey(key) => write!(f, "unknown config key `{key}`"),
            Error::MissingTensor(name) => write!(f, "missing tensor `{name}`"),
            Error::SessionClosed => write!(f, "session already flushed"),
            Error::Diverged { stage, step } => {
                write!(f, "stage {stage} diverged at step {step} (non-finite loss)")
            }
        }
    }
}

impl core::error::Error for Error {}
