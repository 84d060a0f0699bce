//! Monomial lower bounds of posynomials by the weighted AM-GM inequality.

use crate::error::{Error, Result};
use crate::optimizer::gp::Monomial;

/// `c · Π w_m^(2 α_m)`, a lower bound on `(Σ A_m w_m)²` that is tight at the
/// anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBound {
    pub c: f64,
    pub alpha: Vec<f64>,
}

impl MonomialBound {
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.alpha.iter().zip(w).fold(self.c, |acc, (a, w)| acc * w.powf(2.0 * a))
    }
}

/// α_m = ŵ_m A_m / Σ ŵ A and c = (Σ ŵ A)² / Π ŵ^(2α).
pub fn monomial_bound(a: &[f64], anchor: &[f64]) -> Result<MonomialBound> {
    if a.len() != anchor.len() || a.is_empty() {
        return Err(Error::Domain("coefficients and anchor must be non-empty and of equal length".into()));
    }
    if a.iter().chain(anchor).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("coefficients and anchor weights must be positive".into()));
    }
    let total: f64 = a.iter().zip(anchor).map(|(a, w)| a * w).sum();
    let alpha: Vec<f64> = a.iter().zip(anchor).map(|(a, w)| a * w / total).collect();
    let log_c = 2.0 * total.ln() - alpha.iter().zip(anchor).map(|(al, w)| 2.0 * al * w.ln()).sum::<f64>();
    Ok(MonomialBound { c: log_c.exp(), alpha })
}

/// Lower-bounds `Σ terms` by one monomial touching it at `anchor`:
/// Σ g_j ≥ Π (g_j / θ_j)^θ_j with θ_j = g_j(anchor) / Σ g(anchor).
pub fn condense(terms: &[Monomial], anchor: &[f64]) -> Monomial {
    let values: Vec<f64> = terms.iter().map(|t| t.eval(anchor)).collect();
    let total: f64 = values.iter().sum();
    let mut coeff_log = 0.0;
    let mut exponents = Vec::new();
    for (t, v) in terms.iter().zip(&values) {
        let theta = v / total;
        if theta <= 0.0 {
            continue;
        }
        coeff_log += theta * (t.coeff.ln() - theta.ln());
        exponents.extend(t.exponents.iter().map(|&(i, e)| (i, e * theta)));
    }
    Monomial::new(coeff_log.exp(), exponents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn two_equal_satellites() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let b = monomial_bound(&[1.0, 1.0], &[h, h]).unwrap();
        assert_eq!(b.alpha, vec![0.5, 0.5]);
        assert!((b.c - 4.0).abs() < 1e-12);
        assert!((b.eval(&[h, h]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_satellite_is_exact() {
        let b = monomial_bound(&[3.0], &[0.4]).unwrap();
        assert!((b.c - 9.0).abs() < 1e-12);
        for w in [0.01, 0.4, 2.0, 50.0] {
            assert!((b.eval(&[w]) - (3.0 * w).powi(2)).abs() < 1e-9 * (3.0 * w).powi(2));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(monomial_bound(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(monomial_bound(&[1.0], &[-1.0]).is_err());
        assert!(monomial_bound(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn random_bounds_hold() {
        let mut rng = crate::rng::stream(4, crate::rng::Domain::Instance, 0);
        for _ in 0..100 {
            let n = rng.gen_range(1..=4);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..10.0)).collect();
            let anchor: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.001..3.0)).collect();
            let b = monomial_bound(&a, &anchor).unwrap();
            let square = |w: &[f64]| a.iter().zip(w).map(|(a, w)| a * w).sum::<f64>().powi(2);
            assert!(b.eval(&w) <= square(&w) * (1.0 + 1e-12));
            assert!((b.eval(&anchor) / square(&anchor) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn condensation_touches_and_underestimates() {
        let terms = vec![Monomial::new(2.0, vec![(0, 1.0)]), Monomial::new(0.5, vec![(0, -1.0), (1, 2.0)])];
        let anchor = [0.7, 1.3];
        let mono = condense(&terms, &anchor);
        let posy = |x: &[f64]| terms.iter().map(|t| t.eval(x)).sum::<f64>();
        assert!((mono.eval(&anchor) / posy(&anchor) - 1.0).abs() < 1e-12);
        for x in [[0.1, 0.1], [2.0, 0.5], [5.0, 7.0]] {
            assert!(mono.eval(&x) <= posy(&x) * (1.0 + 1e-12));
        }
    }
}
