use std::process::ExitCode;

use clap::Parser;
use kinebci_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("kinebci: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
