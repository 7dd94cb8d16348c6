//! Config-driven runner for the `dlc-core` solvers.
//!
//! Every subcommand reads a [`config::ScenarioConfig`], writes CSV/JSON files
//! into an output directory and stamps each file with the SHA-256 of the
//! canonical config and the seed that was used.

pub mod commands;
pub mod config;

pub use commands::{run, Command, RunOptions};
pub use config::ScenarioConfig;
