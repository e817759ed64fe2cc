//! File formats and command implementations for the `focalstream` tool.
//!
//! The binary is a thin clap front end over [`commands`]; every command
//! writes its human-readable output to a caller-supplied writer and reports
//! failures as [`CliError`], whose [`CliError::exit_code`] is the process
//! status.

pub mod bench;
pub mod bundle;
pub mod commands;
pub mod error;
pub mod runconfig;
pub mod tokenfile;
pub mod wav;
pub mod weights;

pub use error::CliError;
pub use runconfig::RunConfig;
