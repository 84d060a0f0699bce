//! Running one of the packaged experiments from code rather than the CLI.
//! Writes the CSV, the gnuplot script and the run manifest to a temp folder.

use std::path::Path;

use dmimo::harness::{run, Experiment, ExperimentConfig, RunOptions};

fn main() -> dmimo::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/convergence.json");
    let cfg = ExperimentConfig::load(&path)?;
    let out = std::env::temp_dir().join("dmimo-example");
    let files = run(Experiment::Convergence, &cfg, &RunOptions { seed: 1, trials: 2, paper_scale: false }, &out)?;
    println!("{}", std::fs::read_to_string(&files.csv)?);
    println!("manifest: {}", files.manifest.display());
    Ok(())
}
