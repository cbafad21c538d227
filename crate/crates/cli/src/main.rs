use std::process::ExitCode;

use clap::Parser;

mod commands;

use commands::{Cli, UsageError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(
                    e.downcast_ref::<besteffort::Error>(),
                    Some(besteffort::Error::Config(_) | besteffort::Error::UnknownScenario(_))
                );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
