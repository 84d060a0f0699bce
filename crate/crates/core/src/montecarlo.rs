//! Monte Carlo estimates of every expectation in the rate bound, and of the
//! ergodic rate the bound is meant to lower.
//!
//! Trial `t` reads its own random stream, trials run in parallel and the
//! reduction walks them in order, so results do not depend on thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::Allocation;
use crate::channel::sample_channel;
use crate::error::{Error, Result};
use crate::estimation::EstimatorBank;
use crate::linalg::{CVec, C64};
use crate::rate::{RateModel, DENOMINATOR_FLOOR};
use crate::rng::{self, complex_normal, Domain};
use crate::scenario::Scenario;

pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Term {
    /// |DS_k|²
    DesiredSignal,
    /// E|LS_k|²
    BeamformingUncertainty,
    /// E|UI_{k,k'}|²
    Interference { from: usize, cohort: bool },
    /// E|N_k|²
    Noise,
}

impl Term {
    pub fn label(&self) -> String {
        match self {
            Term::DesiredSignal => "ds".into(),
            Term::BeamformingUncertainty => "ls".into(),
            Term::Interference { from, cohort: true } => format!("ui_cohort_{from}"),
            Term::Interference { from, cohort: false } => format!("ui_{from}"),
            Term::Noise => "noise".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TermEstimate {
    pub user: usize,
    pub term: Term,
    pub closed_form: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub trials: usize,
}

impl TermEstimate {
    /// Distance between the estimate and the closed form in standard errors.
    pub fn z_score(&self) -> f64 {
        let diff = (self.mc_mean - self.closed_form).abs();
        if self.mc_se > 0.0 {
            diff / self.mc_se
        } else if diff <= 1e-12 * self.closed_form.abs().max(f64::MIN_POSITIVE) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UserRateEstimate {
    pub user: usize,
    /// Closed-form bound (bit/s).
    pub rate_lb: f64,
    /// Sample mean of B_i log2(1 + instantaneous SINR).
    pub ergodic: f64,
    pub ergodic_se: f64,
    /// The bound's formula with every expectation replaced by its estimate.
    pub bound_mc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub trials: usize,
    pub terms: Vec<TermEstimate>,
    pub users: Vec<UserRateEstimate>,
}

/// What one trial records for one scheduled user.
struct UserSample {
    /// Σ w ĥᴴ h_k
    g: C64,
    /// Σ w ĥᴴ h_{k'} for every k'
    u: Vec<C64>,
    /// |Σ w ĥᴴ n|² with sampled receiver noise
    noise: f64,
    /// σ² Σ w² ‖ĥ‖², the noise power conditioned on the estimate
    noise_given_estimate: f64,
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn run_trial(scenario: &Scenario, bank: &EstimatorBank, alloc: &Allocation, seed: u64, t: usize) -> Vec<Option<UserSample>> {
    let mut rng = rng::stream(seed, Domain::MonteCarlo, t as u64);
    let channel = sample_channel(scenario, &mut rng);
    let est = bank.estimate_all(scenario, &channel, &mut rng);
    let n = scenario.num_antennas();
    let unit_noise: Vec<CVec> =
        (0..scenario.num_satellites()).map(|_| CVec::from_fn(n, |_, _| complex_normal(&mut rng))).collect();
    let k_count = scenario.num_users();
    (0..k_count)
        .map(|k| {
            let bandwidth = alloc.user_bandwidth(k)?;
            let sigma2 = scenario.noise_density() * bandwidth;
            let mut u = vec![C64::new(0.0, 0.0); k_count];
            let mut noise_amp = C64::new(0.0, 0.0);
            let mut noise_given_estimate = 0.0;
            for (&m, &w) in scenario.serving(k).iter().zip(&alloc.weights[k]) {
                let hhat = est.get(m, k);
                for (kp, slot) in u.iter_mut().enumerate() {
                    *slot += hhat.dotc(channel.get(m, kp)) * w;
                }
                noise_amp += hhat.dotc(&unit_noise[m]) * (w * sigma2.sqrt());
                noise_given_estimate += sigma2 * w * w * hhat.norm_squared();
            }
            Some(UserSample { g: u[k], u, noise: noise_amp.norm_sqr(), noise_given_estimate })
        })
        .collect()
}

/// Estimates every bound term and the ergodic rate for each scheduled user.
pub fn monte_carlo_report(
    scenario: &Scenario,
    bank: &EstimatorBank,
    model: &RateModel,
    alloc: &Allocation,
    trials: usize,
    seed: u64,
) -> Result<RateReport> {
    if trials < MIN_TRIALS {
        return Err(Error::Domain(format!("Monte Carlo needs at least {MIN_TRIALS} trials, got {trials}")));
    }
    let samples: Vec<Vec<Option<UserSample>>> =
        (0..trials).into_par_iter().map(|t| run_trial(scenario, bank, alloc, seed, t)).collect();

    let k_count = scenario.num_users();
    let p = &alloc.power;
    let mut terms = Vec::new();
    let mut users = Vec::new();
    for k in 0..k_count {
        let Some(band) = alloc.schedule.band_of(k) else { continue };
        let closed = model.terms(alloc, k)?;
        let per_user: Vec<&UserSample> = samples.iter().map(|s| s[k].as_ref().expect("scheduled")).collect();
        let nf = trials as f64;

        // desired signal: |mean of g|², standard error by the delta method
        let g_bar: C64 = per_user.iter().map(|s| s.g).sum::<C64>() / nf;
        let dir = if g_bar.norm() > 0.0 { g_bar.conj() / g_bar.norm() } else { C64::new(1.0, 0.0) };
        let (_, proj_se) = mean_se(per_user.iter().map(|s| (s.g * dir).re));
        let ds_mc = p[k] * g_bar.norm_sqr();
        let ds_se = 2.0 * p[k] * g_bar.norm() * proj_se;
        terms.push(TermEstimate {
            user: k,
            term: Term::DesiredSignal,
            closed_form: closed.ds,
            mc_mean: ds_mc,
            mc_se: ds_se,
            trials,
        });

        let (ls_mc, ls_se) = mean_se(per_user.iter().map(|s| p[k] * (s.g - g_bar).norm_sqr()));
        let ls_mc = ls_mc * nf / (nf - 1.0);
        terms.push(TermEstimate {
            user: k,
            term: Term::BeamformingUncertainty,
            closed_form: p[k] * closed.i1[k],
            mc_mean: ls_mc,
            mc_se: ls_se,
            trials,
        });

        let mut band_interference = 0.0;
        for kp in (0..k_count).filter(|&kp| kp != k) {
            let pair = model.pair(k, kp);
            let w = &alloc.weights[k];
            let var: f64 = w.iter().zip(&pair.d1).map(|(w, d)| w * w * d).sum();
            let mean: C64 = w.iter().zip(pair.z.iter().zip(&pair.t)).map(|(w, (z, t))| (z + t) * *w).sum();
            let (mc, se) = mean_se(per_user.iter().map(|s| p[kp] * s.u[kp].norm_sqr()));
            if alloc.schedule.band_of(kp) == Some(band) {
                band_interference += mc;
            }
            terms.push(TermEstimate {
                user: k,
                term: Term::Interference { from: kp, cohort: pair.cohort },
                closed_form: p[kp] * (var + mean.norm_sqr()),
                mc_mean: mc,
                mc_se: se,
                trials,
            });
        }

        let (noise_mc, noise_se) = mean_se(per_user.iter().map(|s| s.noise));
        terms.push(TermEstimate {
            user: k,
            term: Term::Noise,
            closed_form: closed.i_noise,
            mc_mean: noise_mc,
            mc_se: noise_se,
            trials,
        });

        let bandwidth = closed.bandwidth;
        let co_band: Vec<usize> = alloc.schedule.group(band).iter().copied().filter(|&kp| kp != k).collect();
        let denominators: Vec<f64> = per_user
            .iter()
            .map(|s| {
                let interference: f64 = co_band.iter().map(|&kp| p[kp] * s.u[kp].norm_sqr()).sum();
                (p[k] * (s.g - g_bar).norm_sqr() + interference + s.noise_given_estimate).max(DENOMINATOR_FLOOR)
            })
            .collect();
        let to_bits = bandwidth / std::f64::consts::LN_2;
        let (ergodic, spread_se) = mean_se(denominators.iter().map(|d| to_bits * (ds_mc / d).ln_1p()));
        // the signal power is itself estimated; carry its error through
        let sensitivity = denominators.iter().map(|d| to_bits / (d + ds_mc)).sum::<f64>() / nf;
        let ergodic_se = spread_se.hypot(sensitivity * ds_se);
        let bound_den = ls_mc + band_interference + noise_mc;
        users.push(UserRateEstimate {
            user: k,
            rate_lb: closed.rate_lb,
            ergodic,
            ergodic_se,
            bound_mc: bandwidth * (ds_mc / bound_den.max(DENOMINATOR_FLOOR)).ln_1p() / std::f64::consts::LN_2,
        });
    }
    Ok(RateReport { trials, terms, users })
}

/// Ergodic rate and its standard error for each scheduled user.
pub fn ergodic_rate_mc(
    scenario: &Scenario,
    bank: &EstimatorBank,
    model: &RateModel,
    alloc: &Allocation,
    trials: usize,
    seed: u64,
) -> Result<Vec<(usize, f64, f64)>> {
    let report = monte_carlo_report(scenario, bank, model, alloc, trials, seed)?;
    Ok(report.users.iter().map(|u| (u.user, u.ergodic, u.ergodic_se)).collect())
}

/// Monte Carlo estimate of tr(R − C) = E‖h − ĥ‖² for link `(m, k)`.
pub fn mse_mc(scenario: &Scenario, bank: &EstimatorBank, m: usize, k: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if trials < MIN_TRIALS {
        return Err(Error::Domain(format!("Monte Carlo needs at least {MIN_TRIALS} trials, got {trials}")));
    }
    let errors: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, Domain::Estimate, t as u64);
            let channel = sample_channel(scenario, &mut rng);
            let est = bank.estimate_all(scenario, &channel, &mut rng);
            (channel.get(m, k) - est.get(m, k)).norm_squared()
        })
        .collect();
    Ok(mean_se(errors.iter().copied()))
}

/// Average estimation error over every serving link, with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EstimationErrorMc {
    pub mse: f64,
    pub mse_se: f64,
    pub nmse: f64,
    pub nmse_se: f64,
    pub trials: usize,
}

/// Monte Carlo mean of ‖h − ĥ‖² and ‖h − ĥ‖² / tr R over the serving links.
/// Each trial averages over links first, so the standard error accounts for
/// links sharing a draw.
pub fn serving_link_error_mc(scenario: &Scenario, bank: &EstimatorBank, trials: usize, seed: u64) -> Result<EstimationErrorMc> {
    if trials < MIN_TRIALS {
        return Err(Error::Domain(format!("Monte Carlo needs at least {MIN_TRIALS} trials, got {trials}")));
    }
    let links: Vec<(usize, usize, f64)> = (0..scenario.num_users())
        .flat_map(|k| scenario.serving(k).iter().map(move |&m| (m, k)))
        .map(|(m, k)| (m, k, crate::linalg::trace(&bank.stats(m, k).r).re))
        .collect();
    let n = links.len() as f64;
    let samples: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, Domain::Estimate, t as u64);
            let channel = sample_channel(scenario, &mut rng);
            let est = bank.estimate_all(scenario, &channel, &mut rng);
            links.iter().fold((0.0, 0.0), |(mse, nmse), &(m, k, tr)| {
                let e = (channel.get(m, k) - est.get(m, k)).norm_squared();
                (mse + e / n, nmse + e / tr / n)
            })
        })
        .collect();
    let (mse, mse_se) = mean_se(samples.iter().map(|s| s.0));
    let (nmse, nmse_se) = mean_se(samples.iter().map(|s| s.1));
    Ok(EstimationErrorMc { mse, mse_se, nmse, nmse_se, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::Schedule;
    use crate::scenario::{Geometry, PilotAssignment, SystemConfig};

    fn toy() -> Scenario {
        let cfg = SystemConfig {
            num_satellites: 3,
            num_users: 4,
            pilot_length: 2,
            num_subbands: 2,
            subband_capacity: 2,
            cluster_size: 2,
            rician_override: Some(2.0),
            geometry: Geometry { azimuth_spread_deg: 30.0, ..Default::default() },
            rng_seed: 5,
            ..SystemConfig::desk_scale()
        };
        Scenario::generate(cfg).unwrap().with_pilots(PilotAssignment::from_indices(vec![0, 0, 1, 1], 2).unwrap()).unwrap()
    }

    #[test]
    fn terms_agree_with_closed_form() {
        let sc = toy();
        let bank = EstimatorBank::new(&sc).unwrap();
        let model = RateModel::new(&sc, &bank);
        let mut alloc = Allocation::equal(&sc, Schedule::from_groups(vec![vec![0, 1, 2], vec![3]], 4).unwrap());
        alloc.weights[0] = vec![0.9, 0.2];
        let report = monte_carlo_report(&sc, &bank, &model, &alloc, 4000, 1).unwrap();
        let worst = report.terms.iter().map(TermEstimate::z_score).fold(0.0, f64::max);
        assert!(worst < 4.0, "worst z-score {worst}");
        for u in &report.users {
            assert!(u.rate_lb <= u.ergodic + 3.0 * u.ergodic_se, "{u:?}");
        }
    }

    #[test]
    fn report_is_reproducible() {
        let sc = toy();
        let bank = EstimatorBank::new(&sc).unwrap();
        let model = RateModel::new(&sc, &bank);
        let alloc = Allocation::equal(&sc, Schedule::single_band(4));
        let a = monte_carlo_report(&sc, &bank, &model, &alloc, 200, 3).unwrap();
        let b = monte_carlo_report(&sc, &bank, &model, &alloc, 200, 3).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(monte_carlo_report(&sc, &bank, &model, &alloc, 10, 3).is_err());
    }

    #[test]
    fn mse_estimate_matches_trace() {
        let sc = toy();
        let bank = EstimatorBank::new(&sc).unwrap();
        let (mean, se) = mse_mc(&sc, &bank, 1, 2, 5000, 9).unwrap();
        assert!((mean - bank.mse(1, 2)).abs() < 4.0 * se);
    }
}
