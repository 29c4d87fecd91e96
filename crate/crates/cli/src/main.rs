//! `cpod`: generate ensembles, train clustered reduced models, evaluate
//! them and condense the results into a summary.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cpod", version, about = "Cluster-based POD reduced-order modeling with a naive Bayes pre-classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the full-order model for the train and test inputs.
    Generate(Common),
    /// Cluster the training ensemble and fit one classifier per K.
    Train(Common),
    /// Predict labels, run reduced models and tabulate errors.
    Evaluate(Common),
    /// Write summary.json and summary.csv.
    Report(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON pipeline configuration; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory shared by all stages.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed, overriding `master_seed` from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error(&CliError::Usage(e.to_string())),
    };
    let result = match &cli.command {
        Command::Generate(c) => commands::generate(c),
        Command::Train(c) => commands::train(c),
        Command::Evaluate(c) => commands::evaluate(c),
        Command::Report(c) => commands::report(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code())
}
