//! `igahd`: run experiments, check the descent inequality, analyze quadratic
//! modes and compare algorithms.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 every run diverged, 4 descent-inequality violations.
//! Progress goes to standard error; data goes to files only.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "igahd",
    version,
    about = "Inertial gradient methods with Hessian-driven damping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write per-seed CSVs plus summary.json.
    Run(Common),
    /// Check the one-step descent inequality along a deterministic run.
    CheckLemma(Common),
    /// Eigen-mode report of a quadratic problem.
    Modes {
        #[command(flatten)]
        common: Common,
        /// Damping of the mode ODE (default: β_1 + √s_1).
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Run the configured method against S-FISTA and heavy ball.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Give every algorithm its own sample stream.
        #[arg(long)]
        unpaired: bool,
    },
    /// Parse and validate a config without running it.
    ValidateConfig(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Run this seed only.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config key, e.g. `schedule.alpha=3.5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, env = "IGAHD_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads for seeds.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => commands::run(c),
        Command::CheckLemma(c) => commands::check_lemma(c),
        Command::Modes { common, beta } => commands::modes(common, *beta),
        Command::Compare { common, unpaired } => commands::compare(common, !unpaired),
        Command::ValidateConfig(c) => commands::validate(c),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
