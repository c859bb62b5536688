//! `vinolab`: run one experiment, persist its record, print the result.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 budget exceeded, 3 invalid input,
//! 64 malformed flags or configuration.

mod args;
mod budget;
mod commands;
mod error;
mod plot;
mod record;

use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde_json::json;

use args::{Cli, Format};
use budget::{Budgets, BUDGET_VAR};
use error::{CliResult, EXIT_USAGE};
use record::{persist, ExperimentRecord, ARTIFACT_VERSION};

fn run(cli: Cli) -> CliResult<()> {
    let env = std::env::var(BUDGET_VAR).ok();
    let budgets = Budgets::resolve(env.as_deref(), &cli.run)?;
    let start = Instant::now();
    let outcome = commands::execute(&cli.command, &budgets)?;
    let record = ExperimentRecord {
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        version: ARTIFACT_VERSION.to_string(),
        subcommand: cli.command.name().to_string(),
        params: json!({ "args": outcome.params, "budget": budgets.echo() }),
        results: outcome.results,
        runtime_seconds: start.elapsed().as_secs_f64(),
        converged: outcome.converged,
    };
    if let Some(path) = &cli.run.out {
        persist(&record, path)?;
    }
    match (&outcome.text, cli.run.format) {
        (Some(text), _) => print!("{text}"),
        (None, Format::Json) => println!("{}", serde_json::to_string_pretty(&record).expect("records serialize")),
        (None, Format::Csv) => print!("{}", outcome.table.to_csv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vinolab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
