use std::process::ExitCode;

use clap::Parser;
use dcone_cli::{run, Cli, CliError};

fn report(e: &CliError) -> ExitCode {
    let body = serde_json::json!({ "error": e.report() });
    eprintln!("{body}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&CliError::Config(e.to_string())),
    };
    match run(&cli) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.document).expect("json"));
            match out.failure {
                Some(e) => report(&e),
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => report(&e),
    }
}
