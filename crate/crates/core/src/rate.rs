//! Closed-form SINR lower bound for MRC combining across serving satellites.
//!
//! Every expectation in the bound is a quadratic form in the user's weight
//! vector `w`, so [`RateModel`] precomputes the per-satellite coefficients once
//! per scenario and evaluates any allocation cheaply:
//!
//! ```text
//! SINR_k = p_k (wᵀA)² / (σ_i² Σ w_m² A_m + Σ_{k'} p_{k'} wᵀQ_{k,k'} w)
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::estimation::EstimatorBank;
use crate::linalg::{c, quad_form, trace, trace_of_product, C64};
use crate::scenario::Scenario;

/// Denominators are clamped here so a noiseless, interference-free toy case
/// cannot divide by zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-30;

/// Coefficients describing how user `k'` leaks into user `k`'s combiner,
/// one entry per satellite in M_k.
#[derive(Debug, Clone)]
pub struct PairTerms {
    /// Per-satellite variance μ'ᴴCμ' + μᴴR'μ + tr(CR').
    pub d1: Vec<f64>,
    /// LoS alignment μᴴμ'.
    pub z: Vec<C64>,
    /// Pilot-contamination correlation E[(ĥ−μ)ᴴ(h'−μ')], zero outside the cohort.
    pub t: Vec<C64>,
    pub cohort: bool,
}

#[derive(Debug, Clone)]
struct UserTerms {
    /// E‖ĥ_{m,k}‖² = ‖μ‖² + tr(C)
    a: Vec<f64>,
    pairs: Vec<PairTerms>,
}

/// Breakdown of one user's bound. Interference entries are listed for every
/// user and are zero for users outside the band (or outside the cohort for
/// `i3`); they are not yet multiplied by the interferer's power.
#[derive(Debug, Clone, Serialize)]
pub struct SinrTerms {
    pub user: usize,
    pub bandwidth: f64,
    /// p_k (Σ w A)²
    pub ds: f64,
    pub i_noise: f64,
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
    pub i3: Vec<f64>,
    pub sinr_lb: f64,
    pub rate_lb: f64,
}

impl SinrTerms {
    /// Denominator of the bound given the interferer powers.
    pub fn denominator(&self, power: &[f64]) -> f64 {
        let interference: f64 = (0..power.len()).map(|j| power[j] * (self.i1[j] + self.i2[j] + self.i3[j])).sum();
        self.i_noise + interference
    }
}

/// One user's bound as a quadratic form: SINR = p (wᵀa)² / (wᵀ(B·N₀·diag(a) + Q)w).
#[derive(Debug, Clone)]
pub struct UserQuadratic {
    pub a: DVector<f64>,
    /// Interference from co-band users, already weighted by their power.
    pub q: DMatrix<f64>,
    /// Noise power of the band.
    pub sigma2: f64,
}

impl UserQuadratic {
    pub fn noise(&self, w: &DVector<f64>) -> f64 {
        self.sigma2 * w.iter().zip(self.a.iter()).map(|(w, a)| w * w * a).sum::<f64>()
    }

    pub fn interference(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.q * w))
    }

    pub fn sinr(&self, power: f64, w: &DVector<f64>) -> f64 {
        power * w.dot(&self.a).powi(2) / (self.noise(w) + self.interference(w)).max(DENOMINATOR_FLOOR)
    }
}

/// Precomputed closed-form coefficients for one scenario.
#[derive(Debug, Clone)]
pub struct RateModel {
    noise_density: f64,
    total_bandwidth: f64,
    users: Vec<UserTerms>,
}

impl RateModel {
    pub fn new(scenario: &Scenario, bank: &EstimatorBank) -> Self {
        let k_count = scenario.num_users();
        let tau = scenario.config.pilot_length as f64;
        let users = (0..k_count)
            .map(|k| {
                let serving = scenario.serving(k);
                let a = serving
                    .iter()
                    .map(|&m| bank.mean(m, k).norm_squared() + trace(&bank.stats(m, k).est_cov).re)
                    .collect();
                let pairs = (0..k_count)
                    .map(|kp| {
                        let cohort = kp != k && scenario.pilots.shares_pilot(k, kp);
                        let mut d1 = Vec::with_capacity(serving.len());
                        let mut z = Vec::with_capacity(serving.len());
                        let mut t = Vec::with_capacity(serving.len());
                        for &m in serving {
                            let (own, other) = (bank.stats(m, k), bank.stats(m, kp));
                            let (mu, mu_p) = (bank.mean(m, k), bank.mean(m, kp));
                            d1.push(
                                quad_form(mu_p, &own.est_cov, mu_p).re
                                    + quad_form(mu, &other.r, mu).re
                                    + trace_of_product(&own.est_cov, &other.r).re,
                            );
                            z.push(mu.dotc(mu_p));
                            t.push(if cohort {
                                let scale = tau * (scenario.pilot_power[k] * scenario.pilot_power[kp]).sqrt();
                                trace_of_product(&other.r, &(&own.psi * &own.r)) * c(scale)
                            } else {
                                C64::new(0.0, 0.0)
                            });
                        }
                        PairTerms { d1, z, t, cohort }
                    })
                    .collect();
                UserTerms { a, pairs }
            })
            .collect();
        Self { noise_density: scenario.noise_density(), total_bandwidth: scenario.config.total_bandwidth, users }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn noise_density(&self) -> f64 {
        self.noise_density
    }

    pub fn total_bandwidth(&self) -> f64 {
        self.total_bandwidth
    }

    /// A_m = E‖ĥ_{m,k}‖² for m in M_k.
    pub fn gain(&self, k: usize) -> &[f64] {
        &self.users[k].a
    }

    pub fn pair(&self, k: usize, kp: usize) -> &PairTerms {
        &self.users[k].pairs[kp]
    }

    /// Q_{k,k'} such that wᵀQw is the power-normalized interference user k'
    /// causes user k when both share a band.
    pub fn interference_matrix(&self, k: usize, kp: usize) -> DMatrix<f64> {
        let p = self.pair(k, kp);
        let mut q = DMatrix::from_diagonal(&DVector::from_column_slice(&p.d1));
        if kp != k {
            let v: Vec<C64> = p.z.iter().zip(&p.t).map(|(z, t)| z + t).collect();
            for i in 0..v.len() {
                for j in 0..v.len() {
                    q[(i, j)] += (v[i] * v[j].conj()).re;
                }
            }
        }
        q
    }

    fn band_of(&self, alloc: &Allocation, k: usize) -> Result<(usize, f64)> {
        let band = alloc
            .schedule
            .band_of(k)
            .ok_or_else(|| Error::Contract(format!("user {k} is not scheduled in any sub-band")))?;
        Ok((band, alloc.bandwidth[band]))
    }

    /// User `k`'s bound as a quadratic form under `alloc`'s schedule and powers.
    pub fn quadratic(&self, alloc: &Allocation, k: usize) -> Result<UserQuadratic> {
        let (band, bandwidth) = self.band_of(alloc, k)?;
        let l = self.users[k].a.len();
        let mut q = DMatrix::zeros(l, l);
        for &kp in alloc.schedule.group(band) {
            q += self.interference_matrix(k, kp) * alloc.power[kp];
        }
        Ok(UserQuadratic {
            a: DVector::from_column_slice(&self.users[k].a),
            q,
            sigma2: self.noise_density * bandwidth,
        })
    }

    pub fn terms(&self, alloc: &Allocation, k: usize) -> Result<SinrTerms> {
        let (band, bandwidth) = self.band_of(alloc, k)?;
        let w = &alloc.weights[k];
        let u = &self.users[k];
        if w.len() != u.a.len() {
            return Err(Error::Contract(format!("user {k} needs {} weights, got {}", u.a.len(), w.len())));
        }
        let sigma2 = self.noise_density * bandwidth;
        let weighted = |v: &[f64]| w.iter().zip(v).map(|(w, x)| w * w * x).sum::<f64>();
        let combine = |v: &mut dyn Iterator<Item = C64>| w.iter().zip(v).map(|(w, x)| x * *w).sum::<C64>();

        let k_count = self.num_users();
        let (mut i1, mut i2, mut i3) = (vec![0.0; k_count], vec![0.0; k_count], vec![0.0; k_count]);
        for &kp in alloc.schedule.group(band) {
            let p = &u.pairs[kp];
            i1[kp] = weighted(&p.d1);
            if kp != k {
                let s1 = combine(&mut p.z.iter().copied());
                i2[kp] = s1.norm_sqr();
                if p.cohort {
                    let full = combine(&mut p.z.iter().zip(&p.t).map(|(z, t)| z + t));
                    i3[kp] = full.norm_sqr() - s1.norm_sqr();
                }
            }
        }
        let gain: f64 = w.iter().zip(&u.a).map(|(w, a)| w * a).sum();
        let ds = alloc.power[k] * gain * gain;
        let mut terms = SinrTerms {
            user: k,
            bandwidth,
            ds,
            i_noise: sigma2 * weighted(&u.a),
            i1,
            i2,
            i3,
            sinr_lb: 0.0,
            rate_lb: 0.0,
        };
        terms.sinr_lb = ds / terms.denominator(&alloc.power).max(DENOMINATOR_FLOOR);
        terms.rate_lb = bandwidth * terms.sinr_lb.ln_1p() / std::f64::consts::LN_2;
        Ok(terms)
    }

    pub fn sinr(&self, alloc: &Allocation, k: usize) -> Result<f64> {
        Ok(self.terms(alloc, k)?.sinr_lb)
    }

    /// B_i log2(1 + SINR), in bit/s.
    pub fn rate(&self, alloc: &Allocation, k: usize) -> Result<f64> {
        Ok(self.terms(alloc, k)?.rate_lb)
    }

    /// Per-user rates; users without a band get zero.
    pub fn user_rates(&self, alloc: &Allocation) -> Vec<f64> {
        (0..self.num_users()).map(|k| self.rate(alloc, k).unwrap_or(0.0)).collect()
    }

    pub fn sum_rate(&self, alloc: &Allocation) -> f64 {
        self.user_rates(alloc).iter().sum()
    }

    /// Whether every user is scheduled and meets its rate requirement.
    pub fn meets_requirements(&self, alloc: &Allocation, requirement: &[f64]) -> bool {
        (0..self.num_users()).all(|k| self.rate(alloc, k).is_ok_and(|r| r >= requirement[k] * (1.0 - 1e-9)))
    }
}

/// The pure line-of-sight limit of the bound, written directly in terms of
/// β, N and the steering vectors.
pub fn sinr_los_limit(scenario: &Scenario, alloc: &Allocation, k: usize) -> Result<f64> {
    let band = alloc
        .schedule
        .band_of(k)
        .ok_or_else(|| Error::Contract(format!("user {k} is not scheduled in any sub-band")))?;
    let sigma2 = scenario.noise_power(alloc.bandwidth[band])?;
    let n = scenario.num_antennas() as f64;
    let w = &alloc.weights[k];
    let serving = scenario.serving(k);
    let mut signal = 0.0;
    let mut noise = 0.0;
    for (&m, &wm) in serving.iter().zip(w) {
        let beta = scenario.link(m, k).beta;
        signal += wm * beta;
        noise += wm * wm * n * sigma2 * beta;
    }
    let mut interference = 0.0;
    for &kp in alloc.schedule.group(band).iter().filter(|&&kp| kp != k) {
        let s: C64 = serving
            .iter()
            .zip(w)
            .map(|(&m, &wm)| {
                let (own, other) = (scenario.link(m, k), scenario.link(m, kp));
                own.los.dotc(&other.los) * (wm * (own.beta * other.beta).sqrt())
            })
            .sum();
        interference += alloc.power[kp] * s.norm_sqr();
    }
    Ok(alloc.power[k] * n * n * signal * signal / (noise + interference).max(DENOMINATOR_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::Schedule;
    use crate::scenario::{PilotAssignment, SystemConfig};

    fn scenario(k: usize, m: usize, cluster: usize, rician: f64, pilots: Vec<usize>, tau: usize) -> Scenario {
        let cfg = SystemConfig {
            num_satellites: m,
            num_users: k,
            cluster_size: cluster,
            pilot_length: tau,
            num_subbands: 1,
            subband_capacity: k,
            rician_override: Some(rician),
            geometry: crate::scenario::Geometry { azimuth_spread_deg: 20.0, ..Default::default() },
            rng_seed: 11,
            ..SystemConfig::desk_scale()
        };
        Scenario::generate(cfg).unwrap().with_pilots(PilotAssignment::from_indices(pilots, tau).unwrap()).unwrap()
    }

    fn model(sc: &Scenario) -> RateModel {
        RateModel::new(sc, &EstimatorBank::new(sc).unwrap())
    }

    #[test]
    fn zero_power_gives_zero_rate() {
        let sc = scenario(3, 2, 2, 5.0, vec![0, 0, 1], 2);
        let mut alloc = Allocation::equal(&sc, Schedule::single_band(3));
        alloc.power[1] = 0.0;
        let t = model(&sc).terms(&alloc, 1).unwrap();
        assert_eq!(t.sinr_lb, 0.0);
        assert_eq!(t.rate_lb, 0.0);
    }

    #[test]
    fn single_link_los_matches_closed_limit() {
        let sc = scenario(1, 1, 1, 1e12, vec![0], 1);
        let alloc = Allocation::equal(&sc, Schedule::single_band(1));
        let sinr = model(&sc).sinr(&alloc, 0).unwrap();
        let beta = sc.link(0, 0).beta;
        let expected = alloc.power[0] * 16.0 * beta / sc.noise_power(alloc.bandwidth[0]).unwrap();
        assert!((sinr / expected - 1.0).abs() < 1e-3, "{sinr} vs {expected}");
        let limit = sinr_los_limit(&sc, &alloc, 0).unwrap();
        assert!((limit / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn general_bound_approaches_los_limit() {
        let sc = scenario(4, 3, 2, 1e12, vec![0, 1, 0, 1], 2);
        let alloc = Allocation::equal(&sc, Schedule::single_band(4));
        let m = model(&sc);
        for k in 0..4 {
            let (a, b) = (m.sinr(&alloc, k).unwrap(), sinr_los_limit(&sc, &alloc, k).unwrap());
            assert!((a / b - 1.0).abs() < 1e-3, "user {k}: {a} vs {b}");
        }
    }

    #[test]
    fn scale_invariance_in_weights() {
        let sc = scenario(4, 3, 3, 4.0, vec![0, 1, 0, 1], 2);
        let m = model(&sc);
        let mut alloc = Allocation::equal(&sc, Schedule::single_band(4));
        alloc.weights[2] = vec![0.3, 0.9, 0.2];
        let base = m.sinr(&alloc, 2).unwrap();
        alloc.weights[2].iter_mut().for_each(|w| *w *= 7.5);
        assert!((m.sinr(&alloc, 2).unwrap() / base - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quadratic_form_agrees_with_terms() {
        let sc = scenario(4, 3, 2, 2.0, vec![0, 0, 1, 1], 2);
        let m = model(&sc);
        let mut alloc = Allocation::equal(&sc, Schedule::single_band(4));
        alloc.power = vec![0.1, 0.2, 0.05, 0.15];
        alloc.weights[0] = vec![0.8, 0.6];
        let quad = m.quadratic(&alloc, 0).unwrap();
        let w = DVector::from_vec(alloc.weights[0].clone());
        let direct = m.sinr(&alloc, 0).unwrap();
        assert!((quad.sinr(alloc.power[0], &w) / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn more_interferer_power_never_helps() {
        let sc = scenario(4, 3, 2, 3.0, vec![0, 0, 1, 1], 2);
        let m = model(&sc);
        let mut alloc = Allocation::equal(&sc, Schedule::single_band(4));
        let before = m.sinr(&alloc, 0).unwrap();
        alloc.power[1] *= 2.0;
        assert!(m.sinr(&alloc, 0).unwrap() <= before);
        let removed = alloc.reschedule(Schedule::from_groups(vec![vec![0, 2, 3], vec![1]], 4).unwrap(), 1e6);
        let mut same_bw = removed.clone();
        same_bw.bandwidth = vec![alloc.bandwidth[0]; 2];
        assert!(m.sinr(&same_bw, 0).unwrap() >= before);
    }

    #[test]
    fn unscheduled_user_is_a_contract_error() {
        let sc = scenario(2, 2, 1, 3.0, vec![0, 1], 2);
        let alloc = Allocation::equal(&sc, Schedule::from_groups(vec![vec![0]], 2).unwrap());
        assert!(matches!(model(&sc).terms(&alloc, 1), Err(Error::Contract(_))));
    }
}
