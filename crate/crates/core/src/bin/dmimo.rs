use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dmimo::harness::{run, Experiment, ExperimentConfig, RunOptions};

/// Run one of the evaluation experiments and write its CSV, gnuplot script
/// and run manifest.
#[derive(Debug, Parser)]
#[command(name = "dmimo", version)]
struct Cli {
    /// nmse-sweep, bound-validate, schedule-compare, convergence or benchmark
    experiment: Experiment,
    /// JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo trials, or seeded instances for the optimization studies
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    out: PathBuf,
    /// Use the full 10x10 array
    #[arg(long)]
    paper_scale: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = ExperimentConfig::load(&cli.config).and_then(|cfg| {
        let options = RunOptions { seed: cli.seed, trials: cli.trials, paper_scale: cli.paper_scale };
        run(cli.experiment, &cfg, &options, &cli.out)
    });
    match result {
        Ok(artifacts) => {
            println!("wrote {}", artifacts.csv.display());
            if let Some(t) = artifacts.timing {
                println!("wrote {}", t.display());
            }
            println!("wrote {}", artifacts.plot.display());
            println!("wrote {}", artifacts.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dmimo: {e}");
            ExitCode::FAILURE
        }
    }
}
