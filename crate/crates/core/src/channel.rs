//! LoS steering vectors, spatial correlation and random channel draws.

use std::f64::consts::PI;

use nalgebra::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_sqrt, CMat, CVec};
use crate::rng::complex_normal;
use crate::scenario::{CorrelationModel, LinkStats, Scenario};

/// UPA steering vector a^x ⊗ a^y, entry `ix * ny + iy`.
pub fn steering_vector(elevation: f64, azimuth: f64, nx: usize, ny: usize, spacing_ratio: f64) -> CVec {
    let kx = -2.0 * PI * spacing_ratio * elevation.sin() * azimuth.cos();
    let ky = -2.0 * PI * spacing_ratio * elevation.cos();
    CVec::from_fn(nx * ny, |idx, _| {
        let (ix, iy) = (idx / ny, idx % ny);
        Complex::from_polar(1.0, kx * ix as f64 + ky * iy as f64)
    })
}

/// Spatial correlation Δ together with its Hermitian square root.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub matrix: CMat,
    pub sqrt: CMat,
    /// Δ = I, which lets samplers skip the matrix product.
    pub is_identity: bool,
}

pub fn correlation_matrix(model: CorrelationModel, n: usize) -> Result<Correlation> {
    match model {
        CorrelationModel::Exponential { r } if !(0.0..1.0).contains(&r) => {
            Err(Error::Domain(format!("exponential correlation needs 0 <= r < 1, got {r}")))
        }
        CorrelationModel::Exponential { r } if r > 0.0 => {
            let matrix = CMat::from_fn(n, n, |i, j| c(r.powi((i as i32 - j as i32).abs())));
            let sqrt = hermitian_sqrt(&matrix);
            Ok(Correlation { matrix, sqrt, is_identity: false })
        }
        _ => Ok(Correlation { matrix: CMat::identity(n, n), sqrt: CMat::identity(n, n), is_identity: true }),
    }
}

/// One draw of every channel vector, with the scattered component kept so
/// that oracles can split terms.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    num_users: usize,
    /// h_{m,k}, stored at `m * K + k`.
    pub h: Vec<CVec>,
    /// The i.i.d. CN(0, I) draw h̃_{m,k}.
    pub scatter: Vec<CVec>,
}

impl ChannelRealization {
    pub fn get(&self, m: usize, k: usize) -> &CVec {
        &self.h[m * self.num_users + k]
    }

    pub fn scatter(&self, m: usize, k: usize) -> &CVec {
        &self.scatter[m * self.num_users + k]
    }
}

/// h = sqrt(a)·(sqrt(K̄)·h̄ + Δ^{1/2}·h̃)
pub fn compose_channel(link: &LinkStats, scatter: &CVec) -> CVec {
    let diffuse = if link.correlation.is_identity { scatter.clone() } else { &link.correlation.sqrt * scatter };
    (&link.los * c(link.rician.sqrt()) + diffuse) * c(link.rician_scale.sqrt())
}

pub fn sample_channel<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> ChannelRealization {
    let (m_count, k_count, n) = (scenario.num_satellites(), scenario.num_users(), scenario.num_antennas());
    let mut h = Vec::with_capacity(m_count * k_count);
    let mut scatter = Vec::with_capacity(m_count * k_count);
    for m in 0..m_count {
        for k in 0..k_count {
            let draw = CVec::from_fn(n, |_, _| complex_normal(rng));
            h.push(compose_channel(scenario.link(m, k), &draw));
            scatter.push(draw);
        }
    }
    ChannelRealization { num_users: k_count, h, scatter }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use crate::scenario::SystemConfig;
    use std::sync::Arc;

    #[test]
    fn steering_examples() {
        let v = steering_vector(PI / 2.0, 0.0, 2, 2, 0.5);
        let expected = [1.0, 1.0, -1.0, -1.0];
        for (z, e) in v.iter().zip(expected) {
            assert!((z - c(e)).norm() < 1e-12, "{v}");
        }
        let w = steering_vector(0.7, 2.1, 3, 5, 0.5);
        assert!(w.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!((w.norm_squared() - 15.0).abs() < 1e-12);
        assert!((w.dotc(&w).norm() - 15.0).abs() < 1e-12);
        // φ = 0 makes a^x all ones, so entries only depend on iy
        let flat = steering_vector(0.0, 1.3, 3, 2, 0.5);
        for ix in 1..3 {
            for iy in 0..2 {
                assert!((flat[ix * 2 + iy] - flat[iy]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_examples() {
        let id = correlation_matrix(CorrelationModel::Identity, 4).unwrap();
        assert_eq!(id.matrix, CMat::identity(4, 4));
        assert_eq!(id.sqrt, CMat::identity(4, 4));
        let zero = correlation_matrix(CorrelationModel::Exponential { r: 0.0 }, 3).unwrap();
        assert_eq!(zero.matrix, CMat::identity(3, 3));
        let half = correlation_matrix(CorrelationModel::Exponential { r: 0.5 }, 2).unwrap();
        assert!((half.matrix[(0, 1)] - c(0.5)).norm() < 1e-15);
        assert!((&half.sqrt * &half.sqrt - &half.matrix).norm() < 1e-12);
        assert!(correlation_matrix(CorrelationModel::Exponential { r: 1.0 }, 2).is_err());
    }

    fn single_link(beta: f64, rician: f64, n: usize) -> LinkStats {
        let corr = Arc::new(correlation_matrix(CorrelationModel::Identity, n).unwrap());
        LinkStats::new(beta, rician, corr, steering_vector(0.4, 1.0, n, 1, 0.5))
    }

    #[test]
    fn pure_los_limit() {
        let link = single_link(2.0, 1e12, 8);
        let mut rng = stream(1, Domain::MonteCarlo, 0);
        let draw = CVec::from_fn(8, |_, _| complex_normal(&mut rng));
        let h = compose_channel(&link, &draw);
        let los = &link.los * c(2f64.sqrt());
        assert!((&h - los).norm() / h.norm() < 1e-5);
    }

    #[test]
    fn rayleigh_power_matches_beta() {
        let (beta, n, trials) = (3.0, 4, 10_000);
        let link = single_link(beta, 0.0, n);
        let mut rng = stream(2, Domain::MonteCarlo, 0);
        let samples: Vec<f64> = (0..trials)
            .map(|_| compose_channel(&link, &CVec::from_fn(n, |_, _| complex_normal(&mut rng))).norm_squared() / n as f64)
            .collect();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - beta).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn realization_is_deterministic_and_reconstructs() {
        let cfg = SystemConfig { num_satellites: 2, num_users: 3, num_subbands: 2, subband_capacity: 2, pilot_length: 2, ..SystemConfig::desk_scale() };
        let sc = Scenario::generate(cfg).unwrap();
        let a = sample_channel(&sc, &mut stream(5, Domain::MonteCarlo, 1));
        let b = sample_channel(&sc, &mut stream(5, Domain::MonteCarlo, 1));
        for m in 0..2 {
            for k in 0..3 {
                assert_eq!(a.get(m, k), b.get(m, k));
                let rebuilt = compose_channel(sc.link(m, k), a.scatter(m, k));
                assert_eq!(&rebuilt, a.get(m, k));
            }
        }
    }
}
