//! File formats, checkpoints, run configuration and the subcommand drivers
//! behind the `adapt` binary.

pub mod checkpoint;
pub mod config;
mod error;
pub mod formats;
pub mod run;

pub use adapt_core as core;
pub use error::{Error, Result};
