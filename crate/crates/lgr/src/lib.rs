//! Data generators, CSV and model file formats, and the `lgr` command-line
//! tools around [`lgr_core`].

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod format;

pub use error::CliError;
