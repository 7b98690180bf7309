//! Command-line front end: configuration, run directories and the
//! experiment plumbing behind each subcommand.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

pub use commands::{run, Subcommand};
pub use config::{ConfigError, RunConfig, VariantKind};
pub use error::CliError;
