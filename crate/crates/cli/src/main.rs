use std::process::ExitCode;

use clap::Parser;
use minimax_cli::commands::output_path;
use minimax_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|json| match output_path(&cli) {
        Some(path) => std::fs::write(path, format!("{json}\n")).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            println!("{json}");
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
