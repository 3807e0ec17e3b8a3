//! Configuration parsing and pipelines behind the `mixpot` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Invocation, Status};
pub use config::{CommandKind, PotentialConfig, PotentialKind, RunConfig};
pub use error::{CliError, Result};
