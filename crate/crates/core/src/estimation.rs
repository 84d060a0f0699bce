//! MMSE channel estimation under pilot contamination.

use rand::Rng;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_part, hermitian_pd_inverse, is_diagonal, trace, CMat, CVec};
use crate::rng::complex_normal;
use crate::scenario::{LinkStats, Scenario};

/// Second-order statistics of one estimate.
#[derive(Debug, Clone)]
pub struct EstimationStats {
    /// R = a·Δ
    pub r: CMat,
    /// Ψ = (Σ_{j∈P_k} τ p_j R_j + σ² I)^{-1}
    pub psi: CMat,
    /// C = τ p_k R Ψ R, covariance of ĥ
    pub est_cov: CMat,
    /// E = R − C, covariance of the error
    pub err_cov: CMat,
}

impl EstimationStats {
    /// tr(R − C).
    pub fn mse(&self) -> f64 {
        trace(&self.err_cov).re
    }

    /// tr(R − C)/tr(R); undefined for a pure LoS link.
    pub fn nmse(&self) -> Result<f64> {
        let tr_r = trace(&self.r).re;
        if !(tr_r > 0.0) {
            return Err(Error::Degenerate("NMSE of a link without scattered power (its limit is 1)".into()));
        }
        Ok(self.mse() / tr_r)
    }
}

pub fn covariance_r(link: &LinkStats) -> CMat {
    link.covariance()
}

/// Ψ for a pilot cohort with covariances `covs` and pilot powers `powers`.
pub fn psi_matrix(covs: &[&CMat], pilot_length: usize, powers: &[f64], sigma2: f64) -> Result<CMat> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("noise power must be positive, got {sigma2}")));
    }
    let n = covs.first().map_or(0, |r| r.nrows());
    let mut sum = CMat::identity(n, n) * c(sigma2);
    for (r, &p) in covs.iter().zip(powers) {
        sum += *r * c(pilot_length as f64 * p);
    }
    hermitian_pd_inverse(&sum)
}

pub fn estimation_stats(r: CMat, psi: CMat, pilot_length: usize, pilot_power: f64) -> EstimationStats {
    let est_cov = hermitian_part(&(&r * &psi * &r * c(pilot_length as f64 * pilot_power)));
    let err_cov = hermitian_part(&(&r - &est_cov));
    EstimationStats { r, psi, est_cov, err_cov }
}

/// A linear map that stays a vector when the matrix is diagonal.
#[derive(Debug, Clone)]
enum LinearMap {
    Diagonal(CVec),
    Dense(CMat),
}

impl LinearMap {
    fn new(m: CMat) -> Self {
        if is_diagonal(&m, 0.0) {
            LinearMap::Diagonal(m.diagonal())
        } else {
            LinearMap::Dense(m)
        }
    }

    fn apply(&self, v: &CVec) -> CVec {
        match self {
            LinearMap::Diagonal(d) => d.component_mul(v),
            LinearMap::Dense(m) => m * v,
        }
    }
}

/// Estimates ĥ_{m,k} for every link, plus the pilot-noise draws behind them.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    num_users: usize,
    pub hhat: Vec<CVec>,
    /// n^p per `(m, pilot)`, stored at `m * τ + pilot`.
    pub pilot_noise: Vec<CVec>,
}

impl ChannelEstimate {
    pub fn get(&self, m: usize, k: usize) -> &CVec {
        &self.hhat[m * self.num_users + k]
    }
}

/// Everything needed to run the estimator on any realization of a scenario.
#[derive(Debug, Clone)]
pub struct EstimatorBank {
    num_users: usize,
    pilot_length: usize,
    sigma2: f64,
    stats: Vec<EstimationStats>,
    means: Vec<CVec>,
    filters: Vec<LinearMap>,
    /// Σ_{j in cohort} sqrt(τ p_j)·E[h_{m,j}] per `(m, pilot)`.
    cohort_means: Vec<CVec>,
}

impl EstimatorBank {
    /// Uses the full-band noise power, as the pilot phase spans all of B.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Self::with_noise(scenario, scenario.estimation_noise())
    }

    pub fn with_noise(scenario: &Scenario, sigma2: f64) -> Result<Self> {
        let (m_count, k_count, n) = (scenario.num_satellites(), scenario.num_users(), scenario.num_antennas());
        let tau = scenario.config.pilot_length;
        let pilots = &scenario.pilots;
        let pp = &scenario.pilot_power;
        let mut stats = Vec::with_capacity(m_count * k_count);
        let mut means = Vec::with_capacity(m_count * k_count);
        let mut filters = Vec::with_capacity(m_count * k_count);
        let mut cohort_means = vec![CVec::zeros(n); m_count * tau];
        for m in 0..m_count {
            let covs: Vec<CMat> = (0..k_count).map(|k| covariance_r(scenario.link(m, k))).collect();
            let mut psi_cache: Vec<Option<CMat>> = vec![None; tau];
            for k in 0..k_count {
                let pilot = pilots.pilot_of(k);
                let psi = match &psi_cache[pilot] {
                    Some(psi) => psi.clone(),
                    None => {
                        let cohort = pilots.cohort(k);
                        let rs: Vec<&CMat> = cohort.iter().map(|&j| &covs[j]).collect();
                        let ps: Vec<f64> = cohort.iter().map(|&j| pp[j]).collect();
                        let psi = psi_matrix(&rs, tau, &ps, sigma2)?;
                        psi_cache[pilot] = Some(psi.clone());
                        psi
                    }
                };
                let mean = scenario.link(m, k).los_mean();
                cohort_means[m * tau + pilot] += &mean * c((tau as f64 * pp[k]).sqrt());
                filters.push(LinearMap::new(&covs[k] * &psi * c((tau as f64 * pp[k]).sqrt())));
                stats.push(estimation_stats(covs[k].clone(), psi, tau, pp[k]));
                means.push(mean);
            }
        }
        Ok(Self { num_users: k_count, pilot_length: tau, sigma2, stats, means, filters, cohort_means })
    }

    pub fn noise_power(&self) -> f64 {
        self.sigma2
    }

    pub fn stats(&self, m: usize, k: usize) -> &EstimationStats {
        &self.stats[m * self.num_users + k]
    }

    /// E[h_{m,k}] = sqrt(K̄ a)·h̄.
    pub fn mean(&self, m: usize, k: usize) -> &CVec {
        &self.means[m * self.num_users + k]
    }

    pub fn nmse(&self, m: usize, k: usize) -> Result<f64> {
        self.stats(m, k).nmse()
    }

    pub fn mse(&self, m: usize, k: usize) -> f64 {
        self.stats(m, k).mse()
    }

    /// ŷ^p = Σ_{j∈P} sqrt(τ p_j)·h_{m,j} + n^p for the cohort on `pilot`.
    pub fn observe(&self, scenario: &Scenario, channel: &ChannelRealization, m: usize, pilot: usize, noise: &CVec) -> CVec {
        let tau = self.pilot_length as f64;
        let mut y = noise.clone();
        for k in (0..self.num_users).filter(|&k| scenario.pilots.pilot_of(k) == pilot) {
            y += channel.get(m, k) * c((tau * scenario.pilot_power[k]).sqrt());
        }
        y
    }

    /// ĥ = E[h] + sqrt(τ p_k)·RΨ·(ŷ^p − every cohort member's mean contribution).
    pub fn mmse_estimate(&self, m: usize, k: usize, pilot: usize, observation: &CVec) -> CVec {
        let idx = m * self.num_users + k;
        let residual = observation - &self.cohort_means[m * self.pilot_length + pilot];
        &self.means[idx] + self.filters[idx].apply(&residual)
    }

    /// Draws pilot noise and estimates every link of `channel`.
    pub fn estimate_all<R: Rng + ?Sized>(&self, scenario: &Scenario, channel: &ChannelRealization, rng: &mut R) -> ChannelEstimate {
        let (m_count, k_count, n) = (scenario.num_satellites(), self.num_users, scenario.num_antennas());
        let std = self.sigma2.sqrt();
        let mut pilot_noise = Vec::with_capacity(m_count * self.pilot_length);
        let mut hhat = Vec::with_capacity(m_count * k_count);
        for m in 0..m_count {
            let observations: Vec<CVec> = (0..self.pilot_length)
                .map(|pilot| {
                    let noise = CVec::from_fn(n, |_, _| complex_normal(rng) * std);
                    let y = self.observe(scenario, channel, m, pilot, &noise);
                    pilot_noise.push(noise);
                    y
                })
                .collect();
            for k in 0..k_count {
                let pilot = scenario.pilots.pilot_of(k);
                hhat.push(self.mmse_estimate(m, k, pilot, &observations[pilot]));
            }
        }
        ChannelEstimate { num_users: k_count, hhat, pilot_noise }
    }
}
