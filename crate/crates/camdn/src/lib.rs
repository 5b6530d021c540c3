//! File formats, sweeps and the command line of the camdn simulator.

pub mod cli;
pub mod error;
pub mod files;
pub mod output;
pub mod sweep;

pub use error::{CliError, Result};
