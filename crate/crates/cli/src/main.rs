//! `lde`: generate suites, train controllers, run experiments, compare
//! results and check gradients.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ConfigFile, Settings};
use crate::error::{usage, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "lde",
    version,
    about = "Learned differential evolution toolkit"
)]
struct Cli {
    /// `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded suite of shifted, rotated benchmark instances.
    Suite(commands::SuiteArgs),
    /// Train a controller on the suite's training functions.
    Train(commands::TrainArgs),
    /// Run the learned DE and baselines under a fixed evaluation budget.
    Run(commands::RunArgs),
    /// Rank-sum comparison tables and average performance scores.
    Compare(commands::CompareArgs),
    /// Compare BPTT gradients with central finite differences.
    Gradcheck(commands::GradcheckArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Suite(_) => "suite",
            Command::Train(_) => "train",
            Command::Run(_) => "run",
            Command::Compare(_) => "compare",
            Command::Gradcheck(_) => "gradcheck",
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let settings = Settings::new(cli.command.name(), &file);
    let seed = settings.get(cli.seed, "seed", 0)?;
    let jobs = settings.get(cli.jobs, "jobs", 0)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| usage(format!("cannot start {jobs} workers: {e}")))?;
    let out = cli.out;
    pool.install(|| match cli.command {
        Command::Suite(a) => commands::suite(a, &settings, seed, out),
        Command::Train(a) => commands::train(a, &settings, seed, out),
        Command::Run(a) => commands::run(a, &settings, seed, out),
        Command::Compare(a) => commands::compare(a, &settings, out),
        Command::Gradcheck(a) => commands::gradcheck(a, &settings, seed, out),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
