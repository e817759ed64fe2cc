use std::io;

use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INPUT: u8 = 2;
    pub const MODEL: u8 = 3;
    pub const USAGE: u8 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input data.
    #[error("{0}")]
    Input(String),
    /// The model file could not be loaded or does not fit the data.
    #[error("model: {0}")]
    Model(String),
    /// Flags or stage ordering are wrong.
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Core(#[from] focalstream_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use focalstream_core::Error as E;
        match self {
            CliError::Input(_) | CliError::Io(_) => exit::INPUT,
            CliError::Model(_) => exit::MODEL,
            CliError::Usage(_) => exit::USAGE,
            CliError::Core(e) => match e {
                E::Format(_) | E::Config { .. } | E::UnknownKey(_) | E::Degenerate(_) => exit::INPUT,
                E::MissingTensor(_) => exit::MODEL,
                E::Contract(_) | E::SessionClosed => exit::USAGE,
                E::Shape { .. } | E::NonFinite(_) | E::Diverged { .. } => exit::MODEL,
            },
        }
    }
}

impl From<hound::Error> for CliError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => CliError::Io(io),
            other => CliError::Input(format!("wav: {other}")),
        }
    }
}
