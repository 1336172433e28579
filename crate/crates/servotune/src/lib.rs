//! Command-line layer over `servotune-core`: run configuration, parallel
//! oracle evaluation, grid-table caching, CSV output and run records.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod parallel;
pub mod record;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use record::RunRecord;
