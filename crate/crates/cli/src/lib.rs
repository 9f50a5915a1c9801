//! Library side of the `finesent` command-line tool: corpus adapters,
//! subcommand bodies and the experiment matrix runner.

pub mod adapters;
pub mod commands;
pub mod error;
pub mod experiment;
pub mod report;

pub use error::CliError;
