//! Command-line entry points and the operator-console service.

pub mod cli;
pub mod commands;
pub mod data;
pub mod error;
pub mod service;
pub mod session;

pub use error::CliError;
