//! Front end for `degenpde`: config parsing, subcommands, CSV output.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{dispatch, CmdError, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, EXIT_VERIFY};
pub use config::{parse_config, Command, ConfigError, RunConfig};
