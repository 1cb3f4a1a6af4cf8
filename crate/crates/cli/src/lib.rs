//! Command-line front end: problem files, subcommands and CSV output.

pub mod commands;
pub mod problem;

pub use commands::{execute, Cli};
