//! File formats, the training harness and the `patchshift` command-line tool
//! on top of [`patchshift_core`].

pub mod checkpoint;
pub mod complexity;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod pattern_io;
pub mod run;

pub use error::{CliError, Result};
pub use patchshift_core as core;
