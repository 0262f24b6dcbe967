//! Command-line front end for hybrid periodic-orbit continuation: run
//! traces and branch switches on the model zoo, validate derivatives and
//! write plot-ready branch files.

pub mod branch_file;
pub mod checks;
pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
