//! Seeded experiment runner behind the `dmimo` binary.
//!
//! Every experiment is a pure function of its configuration and seed. Data
//! tables go to `<name>.csv`; wall-clock measurements, which are not
//! reproducible, go to a separate `<name>-timing.csv`.

mod experiments;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::SystemConfig;

pub use experiments::*;

/// Identifier written into every CSV row.
pub const BUILD_ID: &str = concat!("dmimo-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    NmseSweep,
    BoundValidate,
    ScheduleCompare,
    Convergence,
    Benchmark,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Self::NmseSweep, Self::BoundValidate, Self::ScheduleCompare, Self::Convergence, Self::Benchmark];

    pub fn name(self) -> &'static str {
        match self {
            Self::NmseSweep => "nmse-sweep",
            Self::BoundValidate => "bound-validate",
            Self::ScheduleCompare => "schedule-compare",
            Self::Convergence => "convergence",
            Self::Benchmark => "benchmark",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// Contents of a `--config` file: the system model plus optional sweep axes.
/// Axes left out fall back to per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// Rician factors for the estimation and bound sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rician_grid: Option<Vec<f64>>,
    /// User counts for the scheduling and benchmark sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_grid: Option<Vec<usize>>,
    /// Array shapes `[nx, ny]` for the convergence runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna_grid: Option<Vec<[usize; 2]>>,
    /// Pilot length is the user count minus this (at least 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_deficit: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(system: SystemConfig) -> Self {
        Self { system, rician_grid: None, user_grid: None, antenna_grid: None, pilot_deficit: None }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if let Some(g) = &self.rician_grid {
            if g.is_empty() || !increasing(g) || g.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
                return Err(Error::Config("rician_grid must be non-empty, finite, non-negative and strictly increasing".into()));
            }
        }
        if let Some(g) = &self.user_grid {
            if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) || g[0] == 0 {
                return Err(Error::Config("user_grid must be non-empty, positive and strictly increasing".into()));
            }
        }
        if let Some(g) = &self.antenna_grid {
            if g.is_empty() || g.iter().any(|[x, y]| *x == 0 || *y == 0) {
                return Err(Error::Config("antenna_grid entries must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Run-level parameters from the command line.
#[derive(Debug, Clone, Serialize)]
pub struct RunOptions {
    pub seed: u64,
    /// Monte Carlo trials, or seeded instances for the optimization studies.
    pub trials: usize,
    /// Use the full 10x10 array instead of the configured one.
    pub paper_scale: bool,
}

impl RunOptions {
    /// The system model with the scale flag applied.
    pub fn system(&self, cfg: &ExperimentConfig) -> SystemConfig {
        let mut system = cfg.system.clone();
        if self.paper_scale {
            system.antennas_x = 10;
            system.antennas_y = 10;
        }
        system
    }
}

/// Files one run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub csv: PathBuf,
    pub plot: PathBuf,
    pub timing: Option<PathBuf>,
    pub manifest: PathBuf,
}

/// Serializes rows with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Runs `experiment` and writes its CSV, plot script and manifest into `out`.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig, options: &RunOptions, out: &Path) -> Result<RunArtifacts> {
    cfg.validate()?;
    if options.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let output = match experiment {
        Experiment::NmseSweep => Output::plain(to_csv(&nmse_sweep(cfg, options)?)?),
        Experiment::BoundValidate => Output::plain(to_csv(&bound_validate(cfg, options)?)?),
        Experiment::ScheduleCompare => {
            let (rows, timing) = schedule_compare(cfg, options)?;
            Output { data: to_csv(&rows)?, timing: Some(to_csv(&timing)?) }
        }
        Experiment::Convergence => Output::plain(to_csv(&convergence(cfg, options)?)?),
        Experiment::Benchmark => {
            let (rows, timing) = benchmark(cfg, options)?;
            Output { data: to_csv(&rows)?, timing: Some(to_csv(&timing)?) }
        }
    };

    std::fs::create_dir_all(out)?;
    let name = experiment.name();
    let csv = out.join(format!("{name}.csv"));
    std::fs::write(&csv, &output.data)?;
    let timing = match &output.timing {
        Some(bytes) => {
            let path = out.join(format!("{name}-timing.csv"));
            std::fs::write(&path, bytes)?;
            Some(path)
        }
        None => None,
    };
    let plot = out.join(format!("{name}.gp"));
    std::fs::write(&plot, plot_script(experiment))?;

    let manifest = out.join("run-manifest.json");
    let files: Vec<String> = [Some(&csv), Some(&plot), timing.as_ref()]
        .into_iter()
        .flatten()
        .map(|p| p.file_name().expect("file").to_string_lossy().into_owned())
        .collect();
    let doc = serde_json::json!({
        "experiment": name,
        "build": BUILD_ID,
        "package": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "seed": options.seed,
        "trials": options.trials,
        "paper_scale": options.paper_scale,
        "config": cfg,
        "effective_system": options.system(cfg),
        "outputs": files,
    });
    std::fs::write(&manifest, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(RunArtifacts { csv, plot, timing, manifest })
}

struct Output {
    data: Vec<u8>,
    timing: Option<Vec<u8>>,
}

impl Output {
    fn plain(data: Vec<u8>) -> Self {
        Self { data, timing: None }
    }
}

/// A gnuplot script that renders `<name>.csv` to `<name>.png`.
pub fn plot_script(experiment: Experiment) -> String {
    let name = experiment.name();
    let head = format!(
        "# Plot for {name}.csv; run `gnuplot {name}.gp` in the output directory.\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set terminal pngcairo size 900,600\n\
         set output '{name}.png'\n\
         set grid\n"
    );
    let body = match experiment {
        Experiment::NmseSweep => "set logscale x\nset xlabel 'Rician factor'\nset ylabel 'NMSE'\n\
             plot '$F' using 'rician':'nmse' with linespoints title 'closed form', \\\n\
             \x20    '' using 'rician':'mc_nmse':'mc_nmse_se' with yerrorbars title 'Monte Carlo'\n",
        Experiment::BoundValidate => "set logscale x\nset xlabel 'Rician factor'\nset ylabel 'rate (bit/s)'\n\
             plot '$F' using 'rician':'rate_lb' with points title 'closed-form bound', \\\n\
             \x20    '' using 'rician':'ergodic':'ergodic_se' with yerrorbars title 'ergodic (Monte Carlo)'\n",
        Experiment::ScheduleCompare => "set xlabel 'users'\nset ylabel 'sum rate (bit/s)'\n\
             plot '$F' using 'users':'baseline' with points title 'single band', \\\n\
             \x20    '' using 'users':'threshold' with points title 'threshold scheduler', \\\n\
             \x20    '' using 'users':'exhaustive' with points title 'exhaustive'\n",
        Experiment::Convergence => "set xlabel 'iteration'\nset ylabel 'sum rate (bit/s)'\n\
             plot for [s in 'power bandwidth'] '$F' using 'iteration':(strcol('stage') eq s ? column('sum_rate') : NaN) \
             with linespoints title s\n",
        Experiment::Benchmark => "set xlabel 'users'\nset ylabel 'average sum rate (bit/s)'\n\
             plot for [m in 'proposed equal-weights channel-weights'] '$F' using 'users':(strcol('method') eq m ? column('mean_sum_rate') : NaN) \
             with linespoints title m\n",
    };
    head + &body.replace("$F", &format!("{name}.csv"))
}
