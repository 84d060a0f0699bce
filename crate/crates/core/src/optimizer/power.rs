//! Joint power and combining-weight design for a fixed schedule and
//! bandwidth split, by successive geometric programs.
//!
//! Each user's bound is `p (wᵀA)² / (σ² Σ A_m w_m² + Σ_k' p_k' wᵀ Q_k' w)`.
//! The numerator is replaced by its AM-GM monomial bound and negative
//! cross terms of `Q` are moved to the right-hand side and condensed with it,
//! so each SINR constraint becomes a posynomial inequality around the current
//! point. With fixed weights the constraint is already exact.

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::optimizer::gp::{solve_gp, GpError, GpProblem, GpSolution, Monomial, Posynomial};
use crate::optimizer::lemma::{condense, monomial_bound};
use crate::optimizer::sca::sca_coefficients;
use crate::rate::RateModel;
use crate::scenario::Scenario;

/// Whether combining weights are design variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    Optimize,
    Fixed,
}

#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    /// Relative objective change that ends the outer loop.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub weights: WeightMode,
    /// Rounds of re-condensation when maximizing the feasibility margin.
    pub max_feasibility_rounds: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { epsilon: 0.01, max_iterations: 50, weights: WeightMode::Optimize, max_feasibility_rounds: 30 }
    }
}

/// Largest common scaling `φ` of the SINR targets that powers and weights
/// can meet; `φ ≥ 1` means the rate requirements are attainable.
#[derive(Debug, Clone)]
pub struct Feasibility {
    pub phi: f64,
    pub power: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub rounds: usize,
}

#[derive(Debug, Clone)]
pub struct PowerOutcome {
    pub allocation: Allocation,
    /// Sum rate (bit/s) after each iteration, starting with the initial point.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub feasibility: f64,
}

/// SINR target 2^(R/B) - 1 of each user under `alloc` (0 for unscheduled users).
pub fn sinr_targets(scenario: &Scenario, alloc: &Allocation) -> Vec<f64> {
    (0..scenario.num_users())
        .map(|k| alloc.user_bandwidth(k).map_or(0.0, |b| (scenario.rate_requirement[k] / b).exp2() - 1.0))
        .collect()
}

/// Variable indices for one GP.
struct Layout {
    users: Vec<usize>,
    power: Vec<Option<usize>>,
    weights: Vec<Vec<usize>>,
    /// χ_k in the sum-rate program, unused in the feasibility program.
    chi: Vec<Option<usize>>,
    phi: Option<usize>,
    num_vars: usize,
}

impl Layout {
    fn new(model: &RateModel, alloc: &Allocation, mode: WeightMode, with_chi: bool, with_phi: bool) -> Self {
        let k_count = model.num_users();
        let users: Vec<usize> = (0..k_count).filter(|&k| alloc.schedule.band_of(k).is_some()).collect();
        let mut next = 0;
        let mut take = || {
            next += 1;
            next - 1
        };
        let mut power = vec![None; k_count];
        let mut weights = vec![Vec::new(); k_count];
        let mut chi = vec![None; k_count];
        for &k in &users {
            power[k] = Some(take());
            if mode == WeightMode::Optimize {
                weights[k] = (0..model.gain(k).len()).map(|_| take()).collect();
            }
            if with_chi {
                chi[k] = Some(take());
            }
        }
        let phi = with_phi.then(&mut take);
        Self { users, power, weights, chi, phi, num_vars: next }
    }

    fn optimizes_weights(&self) -> bool {
        self.users.iter().any(|&k| !self.weights[k].is_empty())
    }

    fn p(&self, k: usize) -> usize {
        self.power[k].expect("scheduled user")
    }

    /// Writes powers and weights of `alloc` into a point.
    fn point(&self, alloc: &Allocation) -> Vec<f64> {
        let mut x = vec![1.0; self.num_vars];
        for &k in &self.users {
            x[self.p(k)] = alloc.power[k];
            for (m, &i) in self.weights[k].iter().enumerate() {
                x[i] = alloc.weights[k][m];
            }
        }
        x
    }

    /// Reads powers and (normalized) weights back from a solution.
    fn apply(&self, x: &[f64], base: &Allocation) -> Allocation {
        let mut alloc = base.clone();
        for &k in &self.users {
            alloc.power[k] = x[self.p(k)];
            if !self.weights[k].is_empty() {
                alloc.weights[k] = self.weights[k].iter().map(|&i| x[i]).collect();
            }
        }
        alloc.normalize_weights();
        alloc
    }
}

/// `SINR_k ≥ lhs` as a posynomial constraint, condensed around `anchor`.
fn sinr_constraint(model: &RateModel, alloc: &Allocation, layout: &Layout, k: usize, lhs: &Monomial, anchor: &[f64]) -> Result<Posynomial> {
    let band = alloc.schedule.band_of(k).expect("scheduled user");
    let sigma2 = model.noise_density() * alloc.bandwidth[band];
    let a = model.gain(k);
    let pk = Monomial::var(layout.p(k));
    let wk = &layout.weights[k];
    let fixed = &alloc.weights[k];

    let numerator = if wk.is_empty() {
        let g: f64 = fixed.iter().zip(a).map(|(w, a)| w * a).sum();
        pk.scaled(g * g)
    } else {
        let anchor_w: Vec<f64> = wk.iter().map(|&i| anchor[i]).collect();
        let bound = monomial_bound(a, &anchor_w)?;
        let mut exps: Vec<(usize, f64)> = wk.iter().zip(&bound.alpha).map(|(&i, al)| (i, 2.0 * al)).collect();
        exps.push((layout.p(k), 1.0));
        Monomial::new(bound.c, exps)
    };

    let mut positive = Vec::new();
    let mut negative = Vec::new();
    if wk.is_empty() {
        let noise = sigma2 * fixed.iter().zip(a).map(|(w, a)| w * w * a).sum::<f64>();
        positive.push(Monomial::constant(noise));
    } else {
        positive.extend(wk.iter().zip(a).map(|(&i, a)| Monomial::new(sigma2 * a, vec![(i, 2.0)])));
    }
    for &kp in alloc.schedule.group(band) {
        let q = model.interference_matrix(k, kp);
        let pkp = Monomial::var(layout.p(kp));
        if wk.is_empty() {
            let value: f64 = (0..q.nrows()).flat_map(|m| (0..q.ncols()).map(move |n| (m, n))).map(|(m, n)| q[(m, n)] * fixed[m] * fixed[n]).sum();
            if value > 0.0 {
                positive.push(pkp.scaled(value));
            }
            continue;
        }
        for m in 0..q.nrows() {
            for n in m..q.ncols() {
                let coef = if m == n { q[(m, m)] } else { q[(m, n)] + q[(n, m)] };
                if coef == 0.0 {
                    continue;
                }
                let term = pkp.clone().scaled(coef.abs()).times(&Monomial::new(1.0, vec![(wk[m], 1.0), (wk[n], 1.0)]));
                if coef > 0.0 { positive.push(term) } else { negative.push(term) }
            }
        }
    }

    let rhs = if negative.is_empty() {
        numerator
    } else {
        let mut parts = vec![numerator];
        parts.extend(negative.into_iter().map(|t| t.times(lhs)));
        condense(&parts, anchor)
    };
    let inv = rhs.pow(-1.0);
    Ok(Posynomial::new(positive.into_iter().map(|t| t.times(lhs).times(&inv)).collect()))
}

/// Power caps and, when weights are variables, unit-norm weight constraints.
fn box_constraints(scenario: &Scenario, layout: &Layout) -> Vec<Posynomial> {
    let mut out = Vec::new();
    for &k in &layout.users {
        out.push(Posynomial::new(vec![Monomial::new(1.0 / scenario.max_power[k], vec![(layout.p(k), 1.0)])]));
        if !layout.weights[k].is_empty() {
            out.push(Posynomial::new(layout.weights[k].iter().map(|&i| Monomial::new(1.0, vec![(i, 2.0)])).collect()));
        }
    }
    out
}

fn check_ready(scenario: &Scenario, model: &RateModel, alloc: &Allocation) -> Result<()> {
    if model.num_users() != scenario.num_users() || alloc.power.len() != scenario.num_users() {
        return Err(Error::Contract("allocation does not match the scenario".into()));
    }
    for k in 0..scenario.num_users() {
        if alloc.weights[k].len() != model.gain(k).len() {
            return Err(Error::Contract(format!("user {k} has {} weights, expected {}", alloc.weights[k].len(), model.gain(k).len())));
        }
    }
    Ok(())
}

fn gp_failure(stage: &'static str, e: GpError) -> Error {
    match e {
        GpError::Infeasible => Error::Infeasible { stage, detail: "the geometric program has no feasible point".into() },
        other => Error::Gp(other),
    }
}

/// Solves the GP, accepting the last iterate when only the iteration budget ran out.
fn solve(problem: &GpProblem, start: &[f64], stage: &'static str) -> Result<Vec<f64>> {
    match solve_gp(problem, Some(start)) {
        Ok(GpSolution { x, .. }) => Ok(x),
        Err(GpError::MaxIterations { best }) if problem.max_violation(&best) <= 1e-9 => Ok(best),
        Err(e) => Err(gp_failure(stage, e)),
    }
}

/// Smallest ratio SINR_k / γ_k over users with a positive target.
fn margin(model: &RateModel, alloc: &Allocation, gamma: &[f64]) -> Result<f64> {
    let mut phi = f64::INFINITY;
    for (k, &g) in gamma.iter().enumerate() {
        if g > 0.0 && alloc.schedule.band_of(k).is_some() {
            phi = phi.min(model.sinr(alloc, k)? / g);
        }
    }
    Ok(phi)
}

/// Maximizes the common margin `φ` on the SINR targets over powers (and
/// weights). Starts from full power and `alloc`'s weights.
pub fn feasibility_check(scenario: &Scenario, model: &RateModel, alloc: &Allocation, options: &PowerOptions) -> Result<Feasibility> {
    check_ready(scenario, model, alloc)?;
    let gamma = sinr_targets(scenario, alloc);
    let mut current = alloc.clone();
    current.power = scenario.max_power.clone();
    current.normalize_weights();
    let constrained: Vec<usize> = (0..gamma.len()).filter(|&k| gamma[k] > 0.0 && current.schedule.band_of(k).is_some()).collect();
    if constrained.iter().any(|&k| !gamma[k].is_finite()) {
        return Ok(Feasibility { phi: 0.0, power: current.power, weights: current.weights, rounds: 0 });
    }
    if constrained.is_empty() {
        return Ok(Feasibility { phi: f64::INFINITY, power: current.power, weights: current.weights, rounds: 0 });
    }

    let layout = Layout::new(model, &current, options.weights, false, true);
    let phi_var = layout.phi.expect("margin variable");
    let mut phi = margin(model, &current, &gamma)?;
    let rounds_allowed = if layout.optimizes_weights() { options.max_feasibility_rounds.max(1) } else { 1 };
    let mut rounds = 0;
    for _ in 0..rounds_allowed {
        rounds += 1;
        let mut anchor = layout.point(&current);
        anchor[phi_var] = phi.max(1e-300);
        let mut constraints = box_constraints(scenario, &layout);
        for &k in &constrained {
            let lhs = Monomial::new(gamma[k], vec![(phi_var, 1.0)]);
            constraints.push(sinr_constraint(model, &current, &layout, k, &lhs, &anchor)?);
        }
        let problem = GpProblem { num_vars: layout.num_vars, objective: Monomial::new(1.0, vec![(phi_var, -1.0)]), constraints };
        let mut start = anchor.clone();
        start[phi_var] *= 0.5;
        let x = solve(&problem, &start, "feasibility")?;
        let next = layout.apply(&x, &current);
        let next_phi = margin(model, &next, &gamma)?;
        let change = (next_phi - phi).abs() / next_phi.abs().max(1e-300);
        if next_phi >= phi {
            current = next;
            phi = next_phi;
        }
        if change < 1e-6 {
            break;
        }
    }
    Ok(Feasibility { phi, power: current.power, weights: current.weights, rounds })
}

/// One convexified sum-rate program around a point, with its variable map.
#[derive(Debug, Clone)]
pub struct PowerStep {
    pub problem: GpProblem,
    /// The point the program was condensed around; feasible for it.
    pub anchor: Vec<f64>,
    /// Power variable of each user (`None` if unscheduled).
    pub power_vars: Vec<Option<usize>>,
    /// SINR variable of each user.
    pub chi_vars: Vec<Option<usize>>,
    /// Weight variables of each user, empty with fixed weights.
    pub weight_vars: Vec<Vec<usize>>,
    /// Tangent coefficients `(ψ_k, δ_k)` used in the objective, per user.
    pub sca: Vec<Option<(f64, f64)>>,
}

impl PowerStep {
    /// Surrogate sum rate `Σ B_k (δ_k + ψ_k log2 χ_k)` at `x`.
    pub fn surrogate_rate(&self, alloc: &Allocation, x: &[f64]) -> f64 {
        (0..self.sca.len())
            .filter_map(|k| {
                let (psi, delta) = self.sca[k]?;
                let chi = x[self.chi_vars[k]?];
                Some(alloc.user_bandwidth(k)? * (delta + psi * chi.log2()))
            })
            .sum()
    }
}

fn build_step(scenario: &Scenario, model: &RateModel, current: &Allocation, layout: &Layout, gamma: &[f64]) -> Result<PowerStep> {
    let mut anchor = layout.point(current);
    let mut objective_exps = Vec::new();
    let mut sca = vec![None; scenario.num_users()];
    for &k in &layout.users {
        let chi = model.sinr(current, k)?.max(1e-300);
        let c = sca_coefficients(chi)?;
        let chi_var = layout.chi[k].expect("sum-rate variable");
        anchor[chi_var] = chi;
        sca[k] = Some((c.psi, c.delta));
        objective_exps.push((chi_var, -c.psi * current.user_bandwidth(k).expect("scheduled")));
    }
    let mut constraints = box_constraints(scenario, layout);
    for &k in &layout.users {
        let chi_var = layout.chi[k].expect("sum-rate variable");
        constraints.push(sinr_constraint(model, current, layout, k, &Monomial::var(chi_var), &anchor)?);
        if gamma[k] > 0.0 {
            constraints.push(Posynomial::new(vec![Monomial::new(gamma[k], vec![(chi_var, -1.0)])]));
        }
    }
    Ok(PowerStep {
        problem: GpProblem { num_vars: layout.num_vars, objective: Monomial::new(1.0, objective_exps), constraints },
        anchor,
        power_vars: layout.power.clone(),
        chi_vars: layout.chi.clone(),
        weight_vars: layout.weights.clone(),
        sca,
    })
}

/// The sum-rate program one iteration of [`optimize_power_weights`] solves
/// around `alloc` (powers and weights taken as given).
pub fn power_step(scenario: &Scenario, model: &RateModel, alloc: &Allocation, mode: WeightMode) -> Result<PowerStep> {
    check_ready(scenario, model, alloc)?;
    let mut current = alloc.clone();
    current.normalize_weights();
    let layout = Layout::new(model, &current, mode, true, false);
    build_step(scenario, model, &current, &layout, &sinr_targets(scenario, &current))
}

/// Sum of the scheduled users' rates in bit/s.
fn objective(model: &RateModel, alloc: &Allocation) -> f64 {
    model.sum_rate(alloc)
}

/// Maximizes the sum rate over powers (and weights) for `alloc`'s schedule
/// and bandwidths, subject to the rate requirements and power caps.
///
/// Every iteration replaces log2(1 + χ) by its tangent bound in log2 χ and
/// solves the resulting GP around the current point, so the sum rate never
/// decreases. Stops when the relative gain drops below `epsilon`.
pub fn optimize_power_weights(scenario: &Scenario, model: &RateModel, alloc: &Allocation, options: &PowerOptions) -> Result<PowerOutcome> {
    let feas = feasibility_check(scenario, model, alloc, options)?;
    if feas.phi < 1.0 - 1e-6 {
        return Err(Error::Infeasible {
            stage: "power",
            detail: format!("rate requirements need {:.4}x the attainable SINR", 1.0 / feas.phi),
        });
    }
    let gamma = sinr_targets(scenario, alloc);

    let mut current = alloc.clone();
    current.power = scenario.max_power.clone();
    current.weights = feas.weights.clone();
    current.normalize_weights();
    if margin(model, &current, &gamma)? < 1.0 {
        current.power = feas.power.clone();
    }

    let layout = Layout::new(model, &current, options.weights, true, false);
    let mut history = vec![objective(model, &current)];
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let step = build_step(scenario, model, &current, &layout, &gamma)?;
        let x = solve(&step.problem, &step.anchor, "power")?;
        let next = layout.apply(&x, &current);
        let value = objective(model, &next);
        let previous = *history.last().expect("non-empty");
        history.push(value);
        if value < previous {
            break;
        }
        current = next;
        if (value - previous).abs() <= options.epsilon * value.abs() {
            break;
        }
    }
    Ok(PowerOutcome { allocation: current, objective: history, iterations, feasibility: feas.phi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::Schedule;
    use crate::estimation::EstimatorBank;
    use crate::scenario::SystemConfig;

    fn small(users: usize, cluster: usize, requirement: f64) -> Scenario {
        let mut cfg = SystemConfig::desk_scale();
        cfg.num_users = users;
        cfg.cluster_size = cluster;
        cfg.num_subbands = users.min(2);
        cfg.subband_capacity = users;
        cfg.pilot_length = users.max(1);
        cfg.rate_requirement = crate::scenario::PerUser::Uniform(requirement);
        cfg.geometry.azimuth_spread_deg = 10.0;
        Scenario::generate(cfg).unwrap()
    }

    #[test]
    fn sum_rate_never_decreases() {
        let sc = small(4, 2, 0.0);
        let model = RateModel::new(&sc, &EstimatorBank::new(&sc).unwrap());
        let alloc = Allocation::equal(&sc, Schedule::single_band(4));
        for mode in [WeightMode::Optimize, WeightMode::Fixed] {
            let out = optimize_power_weights(&sc, &model, &alloc, &PowerOptions { weights: mode, ..Default::default() }).unwrap();
            for pair in out.objective.windows(2) {
                assert!(pair[1] >= pair[0] * (1.0 - 1e-8), "{mode:?}: {:?}", out.objective);
            }
            assert!(model.sum_rate(&out.allocation) >= model.sum_rate(&alloc) * (1.0 - 1e-8));
        }
    }

    #[test]
    fn single_user_margin_matches_best_combiner() {
        let sc0 = small(1, 2, 0.0);
        let model = RateModel::new(&sc0, &EstimatorBank::new(&sc0).unwrap());
        let alloc = Allocation::equal(&sc0, Schedule::single_band(1));
        let q = model.quadratic(&alloc, 0).unwrap();
        let p = sc0.max_power[0];
        // without co-band users the best combiner is (σ² diag(A) + p diag(d1))⁻¹ A
        let w = nalgebra::DVector::from_iterator(q.a.len(), (0..q.a.len()).map(|m| q.a[m] / (q.sigma2 * q.a[m] + p * q.q[(m, m)] / p)));
        let best = q.sinr(p, &w.normalize());
        let requirement = alloc.bandwidth[0] * (1.0 + best).log2();
        let sc = sc0.with_user_params(sc0.pilot_power.clone(), sc0.max_power.clone(), vec![requirement]).unwrap();
        let feas = feasibility_check(&sc, &model, &alloc, &PowerOptions::default()).unwrap();
        assert!((feas.phi - 1.0).abs() < 1e-3, "phi = {}", feas.phi);
    }

    #[test]
    fn impossible_requirement_is_reported() {
        let sc = small(2, 2, 1e12);
        let model = RateModel::new(&sc, &EstimatorBank::new(&sc).unwrap());
        let alloc = Allocation::equal(&sc, Schedule::single_band(2));
        let feas = feasibility_check(&sc, &model, &alloc, &PowerOptions::default()).unwrap();
        assert!(feas.phi < 1.0);
        let err = optimize_power_weights(&sc, &model, &alloc, &PowerOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible { stage: "power", .. }));
    }
}
