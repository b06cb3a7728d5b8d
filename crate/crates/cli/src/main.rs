//! `csa`: run the coherent semantic attention kernel on tensor files.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad input (format, shape or
//! argument), 3 empty hole or context region, 4 heatmap pixel outside the hole.

mod args;
mod commands;
mod exit;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("csa: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
