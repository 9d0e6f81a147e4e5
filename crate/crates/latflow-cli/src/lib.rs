//! Experiment harness around `latflow-core`: plain-text run
//! configuration, canonical artifact storage, timestamped run
//! directories, wall-clock timing, and the subcommand implementations
//! behind the `latflow` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod rundir;
pub mod timing;

/// Build-time version string (`git describe` when available).
pub const VERSION: &str = env!("LATFLOW_VERSION");
