//! Batch front end: JSON scenario configurations in, CSV tables and a JSON
//! run manifest out.

pub mod config;
pub mod error;
pub mod runner;

pub use config::ScenarioConfig;
pub use error::{CliError, ErrorClass};
pub use runner::{execute, run_file, validate_file, Overrides, Report, Table};
