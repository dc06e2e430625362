mod commands;
mod config;
mod exit;

use std::process::ExitCode;

use clap::Parser;

use crate::config::{Cli, ExperimentConfig, OUT_DIR_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = ExperimentConfig::resolve(&cli.knobs, std::env::var_os(OUT_DIR_ENV).map(Into::into))
        .and_then(|config| commands::execute(cli.command, &config));
    match outcome {
        Ok(done) => {
            println!("{}", done.summary.trim_end());
            println!("output: {}", done.dir.display());
            ExitCode::from(exit::SUCCESS)
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code)
        }
    }
}
