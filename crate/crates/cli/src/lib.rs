//! Command-line front end for the router: simulated experiments, report replay and a
//! live HTTP routing proxy.

pub mod args;
pub mod commands;
pub mod error;
pub mod serve;

pub use error::{CliError, Result};
