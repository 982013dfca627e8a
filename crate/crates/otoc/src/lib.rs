//! Command-line front end for `otoc-core`: TOML run configurations,
//! a rayon executor, and the CSV/JSON files every subcommand writes.
//!
//! Column layouts are listed in `FORMATS.md` at the repository root.

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod output;

pub use commands::{run, Command, RunOptions, SweepMethod};
pub use config::{Method, RunConfig, TemperatureSpec};
pub use error::CliError;
pub use exec::Parallel;
pub use output::{verify_run_dir, RunManifest};
