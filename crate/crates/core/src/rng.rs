//! Seeded random streams.
//!
//! Every consumer of randomness asks for a stream by `(seed, domain, index)`.
//! Monte Carlo trial `t` always reads stream `t` of its domain, so results do
//! not depend on how trials are spread across threads.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Stream domains. Distinct domains never share a ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Scenario = 1,
    Estimate = 2,
    MonteCarlo = 3,
    Instance = 4,
    Weights = 5,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) ^ index);
    rng
}

/// One CN(0, 1) sample: real and imaginary parts i.i.d. N(0, 1/2).
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex<f64> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, Domain::MonteCarlo, 3).gen()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream(7, Domain::MonteCarlo, 3).gen()).collect();
        assert_eq!(a, b);
        let c: u64 = stream(7, Domain::MonteCarlo, 4).gen();
        let d: u64 = stream(7, Domain::Estimate, 3).gen();
        assert_ne!(a[0], c);
        assert_ne!(a[0], d);
    }

    #[test]
    fn complex_normal_has_unit_variance() {
        let mut rng = stream(1, Domain::MonteCarlo, 0);
        let n = 200_000;
        let (mut re2, mut im2) = (0.0, 0.0);
        for _ in 0..n {
            let z = complex_normal(&mut rng);
            re2 += z.re * z.re;
            im2 += z.im * z.im;
        }
        let (re2, im2) = (re2 / n as f64, im2 / n as f64);
        assert!((re2 - 0.5).abs() < 0.01 && (im2 - 0.5).abs() < 0.01);
    }
}
