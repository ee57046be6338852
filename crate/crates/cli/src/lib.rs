//! Batch front end for the `spinfk` estimators: experiment configs,
//! subcommand dispatch and CSV/JSON artifacts.

pub mod config;
pub mod runner;
