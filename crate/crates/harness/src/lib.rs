//! Experiment runner, file formats and CLI plumbing for `ccb-core`.

pub mod config;
pub mod experiments;
pub mod io;
pub mod runner;
pub mod setup;
