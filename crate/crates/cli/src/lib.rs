//! Command-line front end and annotation-collection service for
//! `spatial-reward`.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod service;
pub mod store;

pub use error::{CliError, CliResult};
