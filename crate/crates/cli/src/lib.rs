//! File formats, run configuration and subcommands for the `leap` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod manifest;
pub mod weights;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
