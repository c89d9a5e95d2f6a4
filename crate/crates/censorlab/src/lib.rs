//! Experiment harness, file formats and command line on top of
//! `censorlab-core`.

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;

pub use error::{AppError, Result};
