mod commands;
mod opts;
mod store;

use std::process::ExitCode;

use clap::Parser;

use opts::{Cli, Command};

/// Error raised by the front end itself, with a stable kind string.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn cli_error(kind: &'static str, message: impl Into<String>) -> anyhow::Error {
    CliError {
        kind,
        message: message.into(),
    }
    .into()
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(c) = cause.downcast_ref::<strf_core::Error>() {
            return c.kind();
        }
        if let Some(c) = cause.downcast_ref::<CliError>() {
            return c.kind;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "Io";
        }
        if cause.downcast_ref::<csv::Error>().is_some() {
            return "Csv";
        }
    }
    "Other"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: kind=Threads message={e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Extract(a) => commands::extract(&cli.global, a),
        Command::FitPca(a) => commands::fit_pca(&cli.global, a),
        Command::Eval => commands::eval(&cli.global),
        Command::Tune(a) => commands::tune(&cli.global, a),
        Command::Synth(a) => commands::synth(&cli.global, a),
        Command::Report(a) => commands::report(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error: kind={} message={message}", error_kind(&e));
            ExitCode::from(1)
        }
    }
}
