use std::process::ExitCode;

use clap::Parser;
use lcap_cli::cli::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match lcap_cli::run::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, lcap_cli::CliError::Usage(_)) {
                eprintln!("run `lcap --help` for usage");
            }
            e.exit_code()
        }
    }
}
