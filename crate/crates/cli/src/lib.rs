//! Configuration and subcommands of the `eaq` tool.

pub mod commands;
pub mod config;

pub use commands::{run, Outcome, Subcommand};
pub use config::{load_config, parse_config, ConfigError, RunConfig};
