//! Std companion of `rectdyne-core`: JSON configuration, an ordered parallel
//! trace engine, averaging pipelines, output formats and the `rectdyne` CLI
//! commands.

pub mod commands;
pub mod config;
pub mod engine;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;

pub use error::{CliError, CliResult};
