//! `qsense`: command-line scans over the force-sensing QFI library.
//!
//! Exit codes: 0 on success, 2 for configuration errors (the message names
//! the offending key), 1 for numerical failures (the message carries the
//! solver diagnostic).

mod commands;
mod config;
mod output;

use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = config::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(config::Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(config::Failure::Numerical(msg)) => {
            eprintln!("numerical error: {msg}");
            ExitCode::from(1)
        }
    }
}
