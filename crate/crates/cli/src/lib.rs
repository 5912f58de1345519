//! Batch front end: synthetic data, feature dumps, clustering, scoring and
//! repeated-trial benchmarks.

pub mod bench;
pub mod commands;
pub mod error;
pub mod io;
pub mod scoring;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
