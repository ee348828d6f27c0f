mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use error::{CliError, ExitKind};

fn version_json() -> String {
    use tlr_core::{mapping, replay};
    serde_json::json!({
        "name": "tlr",
        "version": env!("CARGO_PKG_VERSION"),
        "formats": {
            "log": replay::LOG_FORMAT_VERSION,
            "truth": replay::TRUTH_FORMAT_VERSION,
            "prior_map": mapping::PRIOR_MAP_VERSION,
            "candidates": mapping::CANDIDATE_FILE_VERSION,
            "curation_journal": tlr_curation::JOURNAL_VERSION,
        }
    })
    .to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.version {
        println!("{}", version_json());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        let _ = Cli::command().print_help();
        return ExitCode::from(ExitKind::Usage as u8);
    };
    let result = match command {
        Command::Simulate(a) => commands::simulate(a),
        Command::BuildMap(a) => commands::build_map(a),
        Command::Curate(a) => commands::curate(a),
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
        Command::Transfer(a) => commands::transfer(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { kind, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(kind as u8)
        }
    }
}
