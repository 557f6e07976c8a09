//! File formats, checkpoints and the command-line runner for `hrnn-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;
pub mod run;

pub use error::{Result, RunError};
