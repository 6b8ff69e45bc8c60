use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use uqkit::commands::{run, Cli};
use uqkit::CliError;

fn main() -> ExitCode {
    let json_errors = std::env::args().any(|a| a == "--json-errors");
    let result = match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if json_errors => Err(CliError::Usage(
            e.kind().to_string() + ": " + &e.render().to_string(),
        )),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json_errors {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
