//! File formats, configuration, subcommands and experiment drivers for the
//! `staircase` command line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod format;

pub use config::Config;
pub use error::{CliError, Result};
