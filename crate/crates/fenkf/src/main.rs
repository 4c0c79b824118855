use std::process::ExitCode;

use clap::Parser;
use fenkf::cli::{execute, Cli};

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fenkf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
