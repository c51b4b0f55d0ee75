//! Command-line front end and HTTP service for splatlift.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or inputs, 2 for I/O
//! and file format problems, 3 for numeric failures.

pub mod args;
pub mod commands;
pub mod service;
pub mod viz;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};

/// Parses `argv`, runs the selected command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose {
        "info"
    } else {
        "warn"
    }))
    .try_init();
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
