mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use vsf_core::eval::SweepGrid;
use vsf_core::VsfError;

use args::{Cli, Command};

fn fail(message: &str, kind: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": message, "kind": kind }));
    ExitCode::FAILURE
}

fn run(cli: &Cli) -> Result<(), VsfError> {
    if let Some(n) = cli.parallelism {
        if n == 0 {
            return Err(VsfError::InvalidConfig("parallelism must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| VsfError::InvalidConfig(e.to_string()))?;
    }
    let cfg = commands::effective_config(cli.config.as_deref(), &cli.command, cli.seed, cli.format)?;
    if cli.print_config {
        return commands::emit(&cfg, cli.output.as_deref(), &format!("{}\n", cfg.to_json()));
    }
    let text = match &cli.command {
        Command::Ingest(a) => commands::ingest(&cfg, &a.data)?,
        Command::Eval(a) => commands::eval(&cfg, &a.run)?,
        Command::Sweep(a) => {
            let grid = SweepGrid {
                exponent_b: a.b_values.clone(),
                tau: a.tau_values.clone(),
                m: a.m_values.clone(),
            };
            commands::sweep(&cfg, &a.run, &grid)?
        }
        Command::Cluster(a) => commands::cluster(&cfg, a)?,
    };
    commands::emit(&cfg, cli.output.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return fail(first, "usage");
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e.to_string(), e.kind()),
    }
}
