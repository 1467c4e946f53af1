mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use amlmc::mlmc::Scheme;
use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "amlmc", version, about = "Adaptive and uniform multilevel Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and save the adaptive mesh hierarchy.
    Hierarchy(Flags),
    /// Run the estimator for every tolerance and realization.
    Run(Flags),
    /// Deterministic convergence of adaptive and uniform meshes.
    Convergence(Flags),
    /// Work models, complexity constants and level variance table.
    Report(Flags),
}

#[derive(Args)]
struct Flags {
    /// Example: 0 deterministic, 1 lognormal constant, 2 Matérn field.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=2))]
    example: Option<u8>,
    /// Variance of the log-coefficient.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Estimator: amlmc (adaptive levels) or smlmc (uniform levels).
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Comma-separated tolerances.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    tol: Option<Vec<f64>>,
    /// Base seed of all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Independent estimator runs per tolerance.
    #[arg(long)]
    realizations: Option<usize>,
    /// Output directory; defaults to $AMLMC_OUT or ./amlmc-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file whose fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let o = Overrides {
            example: self.example,
            sigma2: self.sigma2,
            scheme: self.scheme,
            tols: self.tol.clone(),
            seed: self.seed,
            realizations: self.realizations,
            out: self.out.clone(),
        };
        RunConfig::resolve(&o, self.config.as_deref())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Hierarchy(f) => f.resolve().and_then(|c| commands::hierarchy(&c)),
        Command::Run(f) => f.resolve().and_then(|c| commands::run(&c)),
        Command::Convergence(f) => f.resolve().and_then(|c| commands::convergence(&c)),
        Command::Report(f) => f.resolve().and_then(|c| commands::report(&c)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
