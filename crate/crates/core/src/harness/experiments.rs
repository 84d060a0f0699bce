use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{ExperimentConfig, RunOptions, BUILD_ID};
use crate::allocation::{Allocation, Schedule};
use crate::error::{Error, Result};
use crate::estimation::EstimatorBank;
use crate::montecarlo::{monte_carlo_report, serving_link_error_mc};
use crate::optimizer::ao::{alternating_optimize, benchmark_channel_weights, benchmark_equal_weights, AoOptions, AoOutcome, Instance};
use crate::optimizer::bandwidth::optimize_bandwidth;
use crate::optimizer::power::{optimize_power_weights, PowerOptions};
use crate::rate::RateModel;
use crate::scenario::{Scenario, SystemConfig};
use crate::scheduler::{exhaustive_schedule, schedule_users};

pub const DEFAULT_NMSE_GRID: [f64; 9] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 1e3, 1e4];
pub const DEFAULT_BOUND_GRID: [f64; 6] = [1.0, 5.0, 10.0, 20.0, 50.0, 100.0];
pub const DEFAULT_SCHEDULE_USERS: [usize; 5] = [4, 5, 6, 7, 8];
pub const DEFAULT_BENCHMARK_USERS: [usize; 2] = [6, 8];
pub const DEFAULT_ANTENNAS: [[usize; 2]; 2] = [[8, 8], [10, 10]];

#[derive(Debug, Clone, Serialize)]
pub struct NmseRow {
    pub seed: u64,
    pub build: &'static str,
    pub rician: f64,
    pub mse: f64,
    pub nmse: f64,
    pub mc_mse: f64,
    pub mc_mse_se: f64,
    pub mc_nmse: f64,
    pub mc_nmse_se: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub seed: u64,
    pub build: &'static str,
    pub rician: f64,
    pub user: usize,
    pub rate_lb: f64,
    pub ergodic: f64,
    pub ergodic_se: f64,
    pub bound_mc: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleRow {
    pub seed: u64,
    pub build: &'static str,
    pub users: usize,
    pub instance: usize,
    pub baseline: f64,
    pub threshold: f64,
    pub exhaustive: f64,
    pub threshold_feasible: bool,
    pub exhaustive_feasible: bool,
    pub threshold_bands: usize,
    pub threshold_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub users: usize,
    pub instance: usize,
    pub arm: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub build: &'static str,
    pub antennas: usize,
    pub instance: usize,
    pub stage: &'static str,
    pub iteration: usize,
    pub sum_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub seed: u64,
    pub build: &'static str,
    pub users: usize,
    pub method: &'static str,
    pub instances: usize,
    pub mean_sum_rate: f64,
    pub sum_rate_se: f64,
    pub mean_per_user_rate: f64,
    pub feasible_fraction: f64,
    /// Share of instances where the proposed design does at least as well.
    pub proposed_not_worse: f64,
}

fn instance_seed(options: &RunOptions, index: usize) -> u64 {
    options.seed.wrapping_add(index as u64)
}

/// System model resized to `users`, keeping sub-band and pilot settings valid.
fn with_users(system: &SystemConfig, users: usize, pilot_deficit: usize) -> Result<SystemConfig> {
    let mut s = system.clone();
    s.num_users = users;
    s.pilot_length = users.saturating_sub(pilot_deficit).max(1);
    s.num_subbands = s.num_subbands.min(users);
    s.subband_capacity = s.subband_capacity.min(users);
    s.validate()?;
    Ok(s)
}

/// Users spread over the sub-bands in turn.
pub fn round_robin(num_users: usize, num_bands: usize) -> Schedule {
    Schedule::from_colors(&(0..num_users).map(|k| Some(k % num_bands)).collect::<Vec<_>>())
}

/// Estimation error against the Rician factor, closed form and simulated.
pub fn nmse_sweep(cfg: &ExperimentConfig, options: &RunOptions) -> Result<Vec<NmseRow>> {
    let mut system = options.system(cfg);
    system.rng_seed = options.seed;
    let base = Scenario::generate(system)?;
    let grid = cfg.rician_grid.clone().unwrap_or_else(|| DEFAULT_NMSE_GRID.to_vec());
    grid.iter()
        .map(|&rician| {
            let sc = base.with_rician(rician);
            let bank = EstimatorBank::new(&sc)?;
            let links: Vec<(usize, usize)> = (0..sc.num_users()).flat_map(|k| sc.serving(k).iter().map(move |&m| (m, k))).collect();
            let n = links.len() as f64;
            let mse = links.iter().map(|&(m, k)| bank.mse(m, k)).sum::<f64>() / n;
            let nmse = links.iter().map(|&(m, k)| bank.nmse(m, k)).sum::<Result<f64>>()? / n;
            let mc = serving_link_error_mc(&sc, &bank, options.trials, options.seed)?;
            Ok(NmseRow {
                seed: options.seed,
                build: BUILD_ID,
                rician,
                mse,
                nmse,
                mc_mse: mc.mse,
                mc_mse_se: mc.mse_se,
                mc_nmse: mc.nmse,
                mc_nmse_se: mc.nmse_se,
                trials: options.trials,
            })
        })
        .collect()
}

/// Closed-form rate bound against the simulated ergodic rate, per user.
pub fn bound_validate(cfg: &ExperimentConfig, options: &RunOptions) -> Result<Vec<BoundRow>> {
    let mut system = options.system(cfg);
    system.rng_seed = options.seed;
    let base = Scenario::generate(system)?;
    let alloc = Allocation::equal(&base, round_robin(base.num_users(), base.config.num_subbands));
    let grid = cfg.rician_grid.clone().unwrap_or_else(|| DEFAULT_BOUND_GRID.to_vec());
    let mut rows = Vec::new();
    for &rician in &grid {
        let sc = base.with_rician(rician);
        let bank = EstimatorBank::new(&sc)?;
        let model = RateModel::new(&sc, &bank);
        let report = monte_carlo_report(&sc, &bank, &model, &alloc, options.trials, options.seed)?;
        rows.extend(report.users.iter().map(|u| BoundRow {
            seed: options.seed,
            build: BUILD_ID,
            rician,
            user: u.user,
            rate_lb: u.rate_lb,
            ergodic: u.ergodic,
            ergodic_se: u.ergodic_se,
            bound_mc: u.bound_mc,
            trials: options.trials,
        }));
    }
    Ok(rows)
}

/// Single band for everyone vs the threshold scheduler vs exhaustive search,
/// all with an equal bandwidth split, full power and equal weights.
pub fn schedule_compare(cfg: &ExperimentConfig, options: &RunOptions) -> Result<(Vec<ScheduleRow>, Vec<TimingRow>)> {
    let system = options.system(cfg);
    let users = cfg.user_grid.clone().unwrap_or_else(|| DEFAULT_SCHEDULE_USERS.to_vec());
    let deficit = cfg.pilot_deficit.unwrap_or(1);
    let jobs: Vec<(usize, usize)> = users.iter().flat_map(|&k| (0..options.trials).map(move |i| (k, i))).collect();
    let results: Vec<(ScheduleRow, [TimingRow; 2])> = jobs
        .par_iter()
        .map(|&(k, i)| {
            let mut s = with_users(&system, k, deficit)?;
            s.rng_seed = instance_seed(options, i);
            let inst = Instance::new(Scenario::generate(s)?, instance_seed(options, i))?;
            let (bands, cap) = (inst.scenario.config.num_subbands, inst.scenario.config.subband_capacity);
            let req = &inst.scenario.rate_requirement;
            let base = Allocation::equal(&inst.scenario, Schedule::single_band(k));

            let clock = Instant::now();
            let heuristic = schedule_users(&inst.model, &base, &inst.rho, bands, cap, req)?;
            let t_threshold = clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let exh = exhaustive_schedule(&inst.model, &base, bands, cap, req)?;
            let t_exh = clock.elapsed().as_secs_f64();
            Ok((
                ScheduleRow {
                    seed: options.seed,
                    build: BUILD_ID,
                    users: k,
                    instance: i,
                    baseline: inst.model.sum_rate(&base),
                    threshold: heuristic.sum_rate,
                    exhaustive: exh.sum_rate,
                    threshold_feasible: heuristic.feasible,
                    exhaustive_feasible: exh.feasible,
                    threshold_bands: heuristic.schedule.num_bands(),
                    threshold_iterations: heuristic.iterations,
                },
                [
                    TimingRow { users: k, instance: i, arm: "threshold", seconds: t_threshold },
                    TimingRow { users: k, instance: i, arm: "exhaustive", seconds: t_exh },
                ],
            ))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(results.len());
    let mut timing = Vec::with_capacity(2 * results.len());
    for (row, t) in results {
        rows.push(row);
        timing.extend(t);
    }
    Ok((rows, timing))
}

/// Per-iteration sum rate of the power/weight stage followed by the
/// bandwidth stage, for each array size.
pub fn convergence(cfg: &ExperimentConfig, options: &RunOptions) -> Result<Vec<ConvergenceRow>> {
    let antennas = cfg.antenna_grid.clone().unwrap_or_else(|| DEFAULT_ANTENNAS.to_vec());
    let jobs: Vec<([usize; 2], usize)> = antennas.iter().flat_map(|&a| (0..options.trials).map(move |i| (a, i))).collect();
    let per_job: Vec<Vec<ConvergenceRow>> = jobs
        .par_iter()
        .map(|&([nx, ny], i)| {
            let mut s = cfg.system.clone();
            s.antennas_x = nx;
            s.antennas_y = ny;
            s.rng_seed = instance_seed(options, i);
            let inst = Instance::new(Scenario::generate(s)?, instance_seed(options, i))?;
            let cfg = &inst.scenario.config;
            let base = Allocation::equal(&inst.scenario, Schedule::single_band(inst.scenario.num_users()));
            let schedule = schedule_users(&inst.model, &base, &inst.rho, cfg.num_subbands, cfg.subband_capacity, &inst.scenario.rate_requirement)?.schedule;
            let start = base.reschedule(schedule, cfg.total_bandwidth);
            let power = optimize_power_weights(&inst.scenario, &inst.model, &start, &PowerOptions::default())?;
            let bw = optimize_bandwidth(&inst.model, &power.allocation, &inst.scenario.rate_requirement, cfg.total_bandwidth)?;

            let row = |stage, iteration, sum_rate| ConvergenceRow {
                seed: options.seed,
                build: BUILD_ID,
                antennas: nx * ny,
                instance: i,
                stage,
                iteration,
                sum_rate,
            };
            let mut rows: Vec<ConvergenceRow> = power.objective.iter().enumerate().map(|(it, v)| row("power", it, *v)).collect();
            rows.push(row("bandwidth", 0, inst.model.sum_rate(&power.allocation)));
            rows.extend(bw.history.iter().enumerate().map(|(it, v)| row("bandwidth", it + 1, *v)));
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

pub const METHODS: [&str; 3] = ["proposed", "equal-weights", "channel-weights"];

/// Seed-averaged sum rate of the full alternating optimization and the two
/// fixed-weight reference designs.
pub fn benchmark(cfg: &ExperimentConfig, options: &RunOptions) -> Result<(Vec<BenchmarkRow>, Vec<TimingRow>)> {
    let system = options.system(cfg);
    let users = cfg.user_grid.clone().unwrap_or_else(|| DEFAULT_BENCHMARK_USERS.to_vec());
    let deficit = cfg.pilot_deficit.unwrap_or(2);
    let ao = AoOptions::default();
    let jobs: Vec<(usize, usize)> = users.iter().flat_map(|&k| (0..options.trials).map(move |i| (k, i))).collect();
    type Arm = fn(&Instance, &AoOptions) -> Result<AoOutcome>;
    let arms: [Arm; 3] = [alternating_optimize, benchmark_equal_weights, benchmark_channel_weights];
    let results: Vec<Vec<(AoOutcome, f64)>> = jobs
        .par_iter()
        .map(|&(k, i)| {
            let mut s = with_users(&system, k, deficit)?;
            s.rng_seed = instance_seed(options, i);
            let inst = Instance::new(Scenario::generate(s)?, instance_seed(options, i))?;
            arms.iter()
                .map(|arm| {
                    let clock = Instant::now();
                    let out = arm(&inst, &ao)?;
                    Ok((out, clock.elapsed().as_secs_f64()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for &k in &users {
        let runs: Vec<(usize, &Vec<(AoOutcome, f64)>)> =
            jobs.iter().zip(&results).filter(|((kk, _), _)| *kk == k).map(|((_, i), r)| (*i, r)).collect();
        let n = runs.len() as f64;
        for (m, method) in METHODS.iter().enumerate() {
            let rates: Vec<f64> = runs.iter().map(|(_, r)| r[m].0.sum_rate).collect();
            let mean = rates.iter().sum::<f64>() / n;
            let se = if runs.len() > 1 {
                (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            rows.push(BenchmarkRow {
                seed: options.seed,
                build: BUILD_ID,
                users: k,
                method,
                instances: runs.len(),
                mean_sum_rate: mean,
                sum_rate_se: se,
                mean_per_user_rate: mean / k as f64,
                feasible_fraction: runs.iter().filter(|(_, r)| r[m].0.feasible).count() as f64 / n,
                proposed_not_worse: runs.iter().filter(|(_, r)| r[0].0.sum_rate >= r[m].0.sum_rate).count() as f64 / n,
            });
            timing.extend(runs.iter().map(|(i, r)| TimingRow { users: k, instance: *i, arm: method, seconds: r[m].1 }));
        }
    }
    if rows.is_empty() {
        return Err(Error::Config("benchmark needs at least one user count".into()));
    }
    Ok((rows, timing))
}
