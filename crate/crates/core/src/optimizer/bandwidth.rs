//! Bandwidth split across sub-bands for fixed schedule, powers and weights.
//!
//! A user in a band of width x gets f(x) = x log2(1 + a / (b x + c)) with
//! a the desired signal, b x the noise and c the interference. Each f is
//! concave and increasing, so the split maximizing the sum rate under
//! Σ B_i = B and per-user rate floors is characterized by equal marginal
//! rates across the bands above their floors.

use serde::Serialize;
use std::f64::consts::LN_2;

use crate::allocation::Allocation;
use crate::error::{Error, Result};
use crate::rate::RateModel;

/// Coefficients of one user's rate as a function of its band's width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl RateCurve {
    pub fn value(&self, x: f64) -> f64 {
        x * (self.a / (self.b * x + self.c)).ln_1p() / LN_2
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let u = self.b * x + self.c;
        (self.a / u).ln_1p() / LN_2 - x * self.a * self.b / (LN_2 * u * (u + self.a))
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let u = self.b * x + self.c;
        let s = u * (u + self.a);
        (-2.0 * self.a * self.b / s + x * self.a * self.b * self.b * (2.0 * u + self.a) / (s * s)) / LN_2
    }

    /// Rate as x grows without bound.
    pub fn supremum(&self) -> f64 {
        if self.b > 0.0 { self.a / (self.b * LN_2) } else { f64::INFINITY }
    }

    /// Smallest width reaching `rate`, or `None` if the curve never gets there.
    pub fn width_for(&self, rate: f64) -> Option<f64> {
        if rate <= 0.0 {
            return Some(0.0);
        }
        if self.supremum() <= rate {
            return None;
        }
        let mut hi = 1.0;
        while self.value(hi) < rate {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < rate { lo = mid } else { hi = mid }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        Some(hi)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BandwidthOutcome {
    pub bandwidth: Vec<f64>,
    pub sum_rate: f64,
    pub iterations: usize,
    /// Sum rate (bit/s) of the feasible split after each multiplier update.
    pub history: Vec<f64>,
    /// Largest violation of the optimality conditions, in bit/s per Hz.
    pub kkt_residual: f64,
}

/// Tolerance on the KKT residual.
pub const BANDWIDTH_KKT_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 100;

/// Per-band rate curves under `alloc`'s powers and weights.
pub fn rate_curves(model: &RateModel, alloc: &Allocation) -> Result<Vec<Vec<RateCurve>>> {
    let n0 = model.noise_density();
    alloc
        .schedule
        .groups()
        .iter()
        .map(|group| {
            group
                .iter()
                .map(|&k| {
                    let q = model.quadratic(alloc, k)?;
                    let w = nalgebra::DVector::from_column_slice(&alloc.weights[k]);
                    Ok(RateCurve {
                        a: alloc.power[k] * w.dot(&q.a).powi(2),
                        b: n0 * w.iter().zip(q.a.iter()).map(|(w, a)| w * w * a).sum::<f64>(),
                        c: q.interference(&w).max(0.0),
                    })
                })
                .collect()
        })
        .collect()
}

/// Width of a band whose marginal rate equals `lambda`, at least `floor`.
fn width_at_marginal(curves: &[RateCurve], lambda: f64, floor: f64, guess: f64) -> f64 {
    if band_sums(curves, floor).1 <= lambda {
        return floor;
    }
    let mut lo = floor;
    let mut hi = guess.max(floor * 2.0).max(1.0);
    while band_sums(curves, hi).1 > lambda {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = guess.clamp(lo, hi);
    for _ in 0..200 {
        let (_, g, h) = band_sums(curves, x);
        if (g - lambda).abs() <= 1e-15 * lambda {
            break;
        }
        if g > lambda { lo = x } else { hi = x }
        let newton = x - (g - lambda) / h;
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    x
}

/// Largest violation of stationarity (free bands) and dual feasibility
/// (bands at their floor), with λ the curvature-weighted mean marginal rate.
fn kkt_residual(curves: &[Vec<RateCurve>], x: &[f64], floor: &[f64], scale: f64) -> f64 {
    let n = x.len();
    let sums: Vec<(f64, f64, f64)> = (0..n).map(|i| band_sums(&curves[i], x[i])).collect();
    let at_floor = |i: usize| x[i] - floor[i] <= 1e-12 * scale;
    let mut free = vec![true; n];
    let lambda = loop {
        let (num, den) = (0..n).filter(|&i| free[i]).fold((0.0, 0.0), |(num, den), i| {
            let w = 1.0 / (-sums[i].2).max(1e-300);
            (num + sums[i].1 * w, den + w)
        });
        let lambda = num / den;
        match (0..n).find(|&i| free[i] && at_floor(i) && sums[i].1 < lambda) {
            Some(i) => free[i] = false,
            None => break lambda,
        }
    };
    (0..n)
        .map(|i| if at_floor(i) { (sums[i].1 - lambda).max(0.0) } else { (sums[i].1 - lambda).abs() })
        .fold(0.0, f64::max)
}

fn band_sums(curves: &[RateCurve], x: f64) -> (f64, f64, f64) {
    curves.iter().fold((0.0, 0.0, 0.0), |(f, g, h), c| (f + c.value(x), g + c.derivative(x), h + c.second_derivative(x)))
}

/// Splits `total` over the bands of `alloc` to maximize the sum rate while
/// every user keeps at least `requirement[k]`.
pub fn optimize_bandwidth(model: &RateModel, alloc: &Allocation, requirement: &[f64], total: f64) -> Result<BandwidthOutcome> {
    let curves = rate_curves(model, alloc)?;
    let floors: Vec<Vec<f64>> = alloc.schedule.groups().iter().map(|g| g.iter().map(|&k| requirement[k]).collect()).collect();
    let split = split_bandwidth(&curves, &floors, total)?;
    let mut out = alloc.clone();
    out.bandwidth = split.bandwidth.clone();
    Ok(BandwidthOutcome { sum_rate: model.sum_rate(&out), ..split })
}

/// Maximizes Σ_i Σ_k f_ik(B_i) subject to Σ B_i = total and f_ik(B_i) ≥
/// `rate_floor[i][k]`. The returned `sum_rate` is the sum of the curves.
pub fn split_bandwidth(curves: &[Vec<RateCurve>], rate_floor: &[Vec<f64>], total: f64) -> Result<BandwidthOutcome> {
    if !(total > 0.0) {
        return Err(Error::Domain(format!("total bandwidth must be positive, got {total}")));
    }
    let n = curves.len();
    if n == 0 || rate_floor.len() != n {
        return Err(Error::Contract("need one rate-floor list per non-empty band".into()));
    }
    let mut floor = vec![0.0; n];
    for i in 0..n {
        for (j, (c, &r)) in curves[i].iter().zip(&rate_floor[i]).enumerate() {
            let need = c.width_for(r).ok_or_else(|| Error::Infeasible {
                stage: "bandwidth",
                detail: format!("user {j} of band {i} cannot reach {r} bit/s at any bandwidth"),
            })?;
            floor[i] = f64::max(floor[i], need);
        }
    }
    let slack = total - floor.iter().sum::<f64>();
    if slack < 0.0 {
        return Err(Error::Infeasible { stage: "bandwidth", detail: format!("rate floors need {:.6e} Hz of {total:.6e}", total - slack) });
    }

    // The optimum equalizes the marginal rates F_i'(B_i) = λ over bands above
    // their floor. Each band's width is a decreasing function of λ, so λ is
    // found by a safeguarded Newton iteration on Σ B_i(λ) = B.
    let scale = total / n as f64;
    let mut x: Vec<f64> = floor.iter().map(|f| f + slack / n as f64).collect();
    let sums: Vec<(f64, f64, f64)> = (0..n).map(|i| band_sums(&curves[i], x[i])).collect();
    let mut lambda = {
        let (num, den) = sums.iter().fold((0.0, 0.0), |(num, den), s| (num + s.1 / (-s.2).max(1e-300), den + 1.0 / (-s.2).max(1e-300)));
        num / den
    };
    let (mut lo, mut hi) = (0.0, (0..n).map(|i| band_sums(&curves[i], floor[i]).1).fold(0.0, f64::max));
    let objective = |x: &[f64]| (0..n).map(|i| band_sums(&curves[i], x[i]).0).sum::<f64>();
    let mut history = Vec::new();
    let residual;
    let mut iterations = 0;
    loop {
        if !(lambda > lo && lambda < hi) {
            lambda = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo.max(1e-12) };
        }
        for i in 0..n {
            x[i] = width_at_marginal(&curves[i], lambda, floor[i], x[i]);
        }
        let gap = x.iter().sum::<f64>() - total;
        let free: Vec<bool> = (0..n).map(|i| x[i] > floor[i]).collect();
        let inv_curv: Vec<f64> = (0..n).map(|i| if free[i] { 1.0 / (-band_sums(&curves[i], x[i]).2).max(1e-300) } else { 0.0 }).collect();
        let total_inv: f64 = inv_curv.iter().sum();

        // spread the remaining gap over the free bands and measure optimality there
        let mut candidate = x.clone();
        if total_inv > 0.0 {
            for i in 0..n {
                candidate[i] = (candidate[i] - gap * inv_curv[i] / total_inv).max(floor[i]);
            }
        }
        let drift = total - candidate.iter().sum::<f64>();
        if let Some(i) = (0..n).max_by(|&a, &b| (candidate[a] - floor[a]).total_cmp(&(candidate[b] - floor[b]))) {
            candidate[i] += drift;
        }
        let r = kkt_residual(&curves, &candidate, &floor, scale);
        history.push(objective(&candidate));
        if r <= BANDWIDTH_KKT_TOL || iterations >= MAX_NEWTON {
            x = candidate;
            residual = r;
            break;
        }
        iterations += 1;
        if gap > 0.0 { lo = lambda } else { hi = lambda }
        lambda = if total_inv > 0.0 { lambda + gap / total_inv } else { f64::NAN };
    }
    Ok(BandwidthOutcome { sum_rate: objective(&x), bandwidth: x, iterations, history, kkt_residual: residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn unit_curve_values() {
        let c = RateCurve { a: 1.0, b: 1.0, c: 1.0 };
        assert!((c.value(1.0) - 1.5f64.log2()).abs() < 1e-15);
        assert!((c.derivative(1.0) - (1.5f64.log2() - 1.0 / (6.0 * LN_2))).abs() < 1e-15);
        assert!((c.second_derivative(1.0) + 7.0 / (36.0 * LN_2)).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for c in [RateCurve { a: 3.0, b: 0.2, c: 0.5 }, RateCurve { a: 1e-3, b: 1e-6, c: 0.0 }] {
            for x in [0.1, 1.0, 40.0] {
                let h = 1e-5 * x;
                let fd1 = (c.value(x + h) - c.value(x - h)) / (2.0 * h);
                let fd2 = (c.derivative(x + h) - c.derivative(x - h)) / (2.0 * h);
                assert!((fd1 - c.derivative(x)).abs() <= 1e-6 * fd1.abs().max(1e-9), "{c:?} {x}");
                assert!((fd2 - c.second_derivative(x)).abs() <= 1e-5 * fd2.abs().max(1e-9), "{c:?} {x}");
                assert!(c.second_derivative(x) < 0.0);
            }
        }
    }

    fn sum_at(curves: &[Vec<RateCurve>], x: &[f64]) -> f64 {
        curves.iter().zip(x).map(|(band, &x)| band.iter().map(|c| c.value(x)).sum::<f64>()).sum()
    }

    #[test]
    fn identical_bands_split_evenly() {
        let band = vec![RateCurve { a: 3e-28, b: 7e-34, c: 1e-28 }, RateCurve { a: 2e-28, b: 6e-34, c: 2e-28 }];
        let curves = vec![band; 4];
        let out = split_bandwidth(&curves, &vec![vec![0.0; 2]; 4], 1e6).unwrap();
        for b in &out.bandwidth {
            assert!((b / 2.5e5 - 1.0).abs() < 1e-8, "{:?}", out.bandwidth);
        }
        assert!(out.kkt_residual <= BANDWIDTH_KKT_TOL);
    }

    #[test]
    fn beats_equal_split_and_respects_floors() {
        let mut rng = crate::rng::stream(9, crate::rng::Domain::Instance, 0);
        for _ in 0..50 {
            let n = rng.gen_range(2..=4);
            let curves: Vec<Vec<RateCurve>> = (0..n)
                .map(|_| {
                    (0..rng.gen_range(1..=3))
                        .map(|_| RateCurve { a: rng.gen_range(0.1..10.0), b: rng.gen_range(0.01..1.0), c: rng.gen_range(0.0..5.0) })
                        .collect()
                })
                .collect();
            let total = 10.0;
            let floors: Vec<Vec<f64>> = curves.iter().map(|b| b.iter().map(|c| 0.3 * c.value(total / 8.0)).collect()).collect();
            let out = split_bandwidth(&curves, &floors, total).unwrap();
            assert!(out.kkt_residual <= BANDWIDTH_KKT_TOL, "{out:?}");
            assert!((out.bandwidth.iter().sum::<f64>() - total).abs() < 1e-9 * total);
            let equal = vec![total / n as f64; n];
            assert!(out.sum_rate >= sum_at(&curves, &equal) * (1.0 - 1e-12));
            for (i, band) in curves.iter().enumerate() {
                for (c, r) in band.iter().zip(&floors[i]) {
                    assert!(c.value(out.bandwidth[i]) >= r * (1.0 - 1e-9));
                }
            }
        }
    }

    #[test]
    fn infeasible_floors_are_reported() {
        let c = RateCurve { a: 1.0, b: 1.0, c: 1.0 };
        let err = split_bandwidth(&[vec![c], vec![c]], &[vec![0.5], vec![0.5]], 1.0).unwrap_err();
        assert!(matches!(err, Error::Infeasible { stage: "bandwidth", .. }));
        let err = split_bandwidth(&[vec![c]], &[vec![10.0]], 1.0).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }

    #[test]
    fn inverse_rate() {
        let c = RateCurve { a: 2.0, b: 0.5, c: 0.1 };
        let x = c.width_for(1.2).unwrap();
        assert!((c.value(x) - 1.2).abs() < 1e-9);
        assert!(c.width_for(c.supremum() * 1.01).is_none());
    }
}
