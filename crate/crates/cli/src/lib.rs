//! Command-line driver: file formats, run manifests and the subcommands.

pub mod args;
pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;

pub use args::Cli;
pub use commands::run;
pub use error::{CliError, CliResult};
