use std::process::ExitCode;

use clap::Parser;
use sideinfo_cli::{execute, Cli};

fn main() -> ExitCode {
    ExitCode::from(execute(Cli::parse()))
}
