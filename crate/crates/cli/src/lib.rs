//! Command-line pipeline: configuration, artifact layout, manifests and the
//! commands that chain corpus preparation, representation learning,
//! classification, interpretation and evaluation.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod inputs;
pub mod manifest;
pub mod resolve;

pub use commands::{run_command, Command, Context};
pub use error::{CliError, Result};
