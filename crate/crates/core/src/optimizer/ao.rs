//! Alternating optimization of schedule, power/weights and bandwidth, plus
//! the two fixed-weight reference designs.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::allocation::{Allocation, Schedule};
use crate::channel::sample_channel;
use crate::error::{Error, Result};
use crate::estimation::{ChannelEstimate, EstimatorBank};
use crate::optimizer::bandwidth::optimize_bandwidth;
use crate::optimizer::power::{optimize_power_weights, PowerOptions, WeightMode};
use crate::rate::RateModel;
use crate::rng::{self, Domain};
use crate::scenario::Scenario;
use crate::scheduler::{correlation_matrix, schedule_users};

/// A scenario with its estimator, closed-form model and one channel estimate
/// (used for the correlation-based scheduling and channel-based weights).
#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub bank: EstimatorBank,
    pub model: RateModel,
    pub estimate: ChannelEstimate,
    pub rho: DMatrix<f64>,
}

impl Instance {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self> {
        let bank = EstimatorBank::new(&scenario)?;
        let model = RateModel::new(&scenario, &bank);
        let mut rng = rng::stream(seed, Domain::Instance, 0);
        let channel = sample_channel(&scenario, &mut rng);
        let estimate = bank.estimate_all(&scenario, &channel, &mut rng);
        let rho = correlation_matrix(&scenario, &estimate)?;
        Ok(Self { scenario, bank, model, estimate, rho })
    }

    fn schedule(&self, base: &Allocation) -> Result<Schedule> {
        let cfg = &self.scenario.config;
        Ok(schedule_users(&self.model, base, &self.rho, cfg.num_subbands, cfg.subband_capacity, &self.scenario.rate_requirement)?.schedule)
    }

    /// (requirements met, sum rate) of an allocation.
    pub fn score(&self, alloc: &Allocation) -> (bool, f64) {
        let complete = alloc.schedule.unscheduled().is_empty();
        (complete && self.model.meets_requirements(alloc, &self.scenario.rate_requirement), self.model.sum_rate(alloc))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AoOptions {
    /// Relative sum-rate gain per round below which the loop stops.
    pub tolerance: f64,
    pub max_rounds: usize,
    pub power: PowerOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self { tolerance: 1e-3, max_rounds: 20, power: PowerOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Initial,
    Schedule,
    Power,
    Bandwidth,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub round: usize,
    pub stage: Stage,
    pub accepted: bool,
    /// Sum rate of the incumbent after this stage.
    pub sum_rate: f64,
    /// Inner iterations the stage took.
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AoOutcome {
    pub allocation: Allocation,
    pub feasible: bool,
    pub sum_rate: f64,
    pub rounds: usize,
    pub history: Vec<StageRecord>,
}

fn improves(candidate: (bool, f64), incumbent: (bool, f64)) -> bool {
    match (candidate.0, incumbent.0) {
        (true, false) => true,
        (false, true) => false,
        _ => candidate.1 > incumbent.1,
    }
}

/// Runs a stage; infeasible stages leave the incumbent unchanged.
fn attempt(result: Result<(Allocation, usize)>) -> Result<Option<(Allocation, usize)>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

struct Tracker<'a> {
    inst: &'a Instance,
    current: Allocation,
    score: (bool, f64),
    history: Vec<StageRecord>,
}

impl Tracker<'_> {
    fn offer(&mut self, round: usize, stage: Stage, candidate: Option<(Allocation, usize)>) {
        let (accepted, iterations) = match candidate {
            Some((alloc, iterations)) => {
                let score = self.inst.score(&alloc);
                let accepted = improves(score, self.score);
                if accepted {
                    self.current = alloc;
                    self.score = score;
                }
                (accepted, iterations)
            }
            None => (false, 0),
        };
        self.history.push(StageRecord { round, stage, accepted, sum_rate: self.score.1, iterations });
    }

    fn finish(self, rounds: usize) -> AoOutcome {
        AoOutcome { feasible: self.score.0, sum_rate: self.score.1, allocation: self.current, rounds, history: self.history }
    }
}

fn bandwidth_stage(inst: &Instance, alloc: &Allocation) -> Result<(Allocation, usize)> {
    let out = optimize_bandwidth(&inst.model, alloc, &inst.scenario.rate_requirement, inst.scenario.config.total_bandwidth)?;
    Ok((Allocation { bandwidth: out.bandwidth, ..alloc.clone() }, out.iterations))
}

fn power_stage(inst: &Instance, alloc: &Allocation, options: &PowerOptions) -> Result<(Allocation, usize)> {
    let out = optimize_power_weights(&inst.scenario, &inst.model, alloc, options)?;
    Ok((out.allocation, out.iterations))
}

/// Schedule, then power and weights, then bandwidth, repeated until a round
/// gains less than `tolerance` in relative sum rate. A stage result is only
/// kept if it improves on the incumbent (feasibility first, then sum rate).
pub fn alternating_optimize(inst: &Instance, options: &AoOptions) -> Result<AoOutcome> {
    let start = Allocation::equal(&inst.scenario, Schedule::single_band(inst.scenario.num_users()));
    let initial = start.reschedule(inst.schedule(&start)?, inst.scenario.config.total_bandwidth);
    let mut t = Tracker { inst, score: inst.score(&initial), current: initial, history: Vec::new() };
    t.history.push(StageRecord { round: 0, stage: Stage::Initial, accepted: true, sum_rate: t.score.1, iterations: 0 });

    let mut rounds = 0;
    while rounds < options.max_rounds {
        rounds += 1;
        let before = t.score.1;
        if rounds > 1 {
            let schedule = inst.schedule(&t.current)?;
            let candidate = t.current.reschedule(schedule, inst.scenario.config.total_bandwidth);
            t.offer(rounds, Stage::Schedule, Some((candidate, 1)));
        }
        let candidate = attempt(power_stage(inst, &t.current, &options.power))?;
        t.offer(rounds, Stage::Power, candidate);
        let candidate = attempt(bandwidth_stage(inst, &t.current))?;
        t.offer(rounds, Stage::Bandwidth, candidate);
        if t.score.1 - before <= options.tolerance * t.score.1.abs() {
            break;
        }
    }
    Ok(t.finish(rounds))
}

/// Fixed weights, the threshold scheduler, an equal bandwidth split and
/// power control only.
fn fixed_weight_design(inst: &Instance, weights: Vec<Vec<f64>>, options: &AoOptions) -> Result<AoOutcome> {
    let mut start = Allocation::equal(&inst.scenario, Schedule::single_band(inst.scenario.num_users()));
    start.weights = weights;
    start.normalize_weights();
    let initial = start.reschedule(inst.schedule(&start)?, inst.scenario.config.total_bandwidth);
    let mut t = Tracker { inst, score: inst.score(&initial), current: initial, history: Vec::new() };
    t.history.push(StageRecord { round: 0, stage: Stage::Initial, accepted: true, sum_rate: t.score.1, iterations: 0 });
    let power = PowerOptions { weights: WeightMode::Fixed, ..options.power };
    let candidate = attempt(power_stage(inst, &t.current, &power))?;
    t.offer(1, Stage::Power, candidate);
    Ok(t.finish(1))
}

/// Reference design with equal combining weights 1/sqrt(|M_k|).
pub fn benchmark_equal_weights(inst: &Instance, options: &AoOptions) -> Result<AoOutcome> {
    let weights = (0..inst.scenario.num_users())
        .map(|k| {
            let l = inst.scenario.serving(k).len();
            vec![1.0 / (l as f64).sqrt(); l]
        })
        .collect();
    fixed_weight_design(inst, weights, options)
}

/// Reference design with weights proportional to the estimated channel norms.
pub fn benchmark_channel_weights(inst: &Instance, options: &AoOptions) -> Result<AoOutcome> {
    let weights = (0..inst.scenario.num_users())
        .map(|k| inst.scenario.serving(k).iter().map(|&m| inst.estimate.get(m, k).norm().max(1e-300)).collect())
        .collect();
    fixed_weight_design(inst, weights, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{PerUser, SystemConfig};

    #[test]
    fn alternating_rounds_never_lose_rate() {
        let mut cfg = SystemConfig::desk_scale();
        cfg.geometry.azimuth_spread_deg = 10.0;
        cfg.rate_requirement = PerUser::Uniform(1e4);
        let inst = Instance::new(Scenario::generate(cfg).unwrap(), 1).unwrap();
        let out = alternating_optimize(&inst, &AoOptions::default()).unwrap();
        for pair in out.history.windows(2) {
            assert!(pair[1].sum_rate >= pair[0].sum_rate);
        }
        assert!(out.allocation.schedule.validate(inst.scenario.config.num_subbands, inst.scenario.config.subband_capacity).is_ok());
        let total: f64 = out.allocation.bandwidth.iter().sum();
        assert!((total / inst.scenario.config.total_bandwidth - 1.0).abs() < 1e-9);
        let b1 = benchmark_equal_weights(&inst, &AoOptions::default()).unwrap();
        let b2 = benchmark_channel_weights(&inst, &AoOptions::default()).unwrap();
        assert!(b1.sum_rate > 0.0 && b2.sum_rate > 0.0);
    }
}
