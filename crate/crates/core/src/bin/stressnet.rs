use std::process::ExitCode;

use clap::Parser;
use stressnet::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut out, mut log) = (std::io::stdout().lock(), std::io::stderr());
    match run(&cli, &mut out, &mut log) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
