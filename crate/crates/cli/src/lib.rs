//! Command-line pipeline and annotation service.

pub mod args;
pub mod commands;
pub mod error;
pub mod server;

pub use error::{CliError, Result};
