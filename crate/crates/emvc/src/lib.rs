//! File formats, configuration and the command-line workflow around `emvc-core`.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod images;
pub mod manifest;
pub mod shard;

pub use config::RunConfig;
pub use error::{CliError, Result};
