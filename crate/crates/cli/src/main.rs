mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for configuration and validation failures.
const EXIT_CONFIG: u8 = 2;
/// Exit status for runtime failures.
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "qdspace", version, about = "Quality-diversity search over dissimilarity spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a configured experiment and write its outputs.
    Run(RunArgs),
    /// Score a completed run directory into scores.csv.
    Score(ScoreArgs),
    /// Print coupon-collection bounds for a distribution as JSON.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config (TOML).
    #[arg(long)]
    config: std::path::PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    output: Option<std::path::PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's evaluation budget.
    #[arg(long)]
    eval_budget: Option<usize>,
    /// Override the config's algorithm (full | baseline).
    #[arg(long)]
    algorithm: Option<String>,
    /// Override the config's baseline bandwidth.
    #[arg(long)]
    baseline_bandwidth: Option<f64>,
    /// Threads for batched objective evaluation (outputs are unaffected).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Run directory produced by `qdspace run`.
    #[arg(long)]
    run: std::path::PathBuf,
    /// Shared lower normalization bound (defaults to the run's own minimum).
    #[arg(long)]
    min_objective: Option<f64>,
    /// Shared upper normalization bound (defaults to the run's own maximum).
    #[arg(long)]
    max_objective: Option<f64>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Number of coupon types (ignored when an explicit list is given).
    #[arg(long)]
    n: Option<usize>,
    /// Number of distinct types to collect.
    #[arg(long)]
    m: usize,
    /// Partition cutoff for the bound computation.
    #[arg(long)]
    c: usize,
    /// Distribution: "uniform", "zipf:<gamma>", or "list:p1,p2,...".
    #[arg(long, default_value = "uniform")]
    dist: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => commands::run(args),
        Command::Score(args) => commands::score(args),
        Command::Bounds(args) => commands::bounds(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(commands::CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
