//! Tangent lower bound of log2(1 + χ) in log2 χ, used by the successive
//! convex approximation.

use crate::error::{Error, Result};

/// Coefficients of ψ·log2 χ + δ touching log2(1 + χ) at `chi_prev`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaCoefficients {
    pub psi: f64,
    pub delta: f64,
}

pub fn sca_coefficients(chi_prev: f64) -> Result<ScaCoefficients> {
    if !(chi_prev > 0.0 && chi_prev.is_finite()) {
        return Err(Error::Domain(format!("SCA anchor must be positive and finite, got {chi_prev}")));
    }
    let psi = chi_prev / (1.0 + chi_prev);
    Ok(ScaCoefficients { psi, delta: chi_prev.ln_1p() / std::f64::consts::LN_2 - psi * chi_prev.log2() })
}

impl ScaCoefficients {
    pub fn surrogate(&self, chi: f64) -> f64 {
        self.psi * chi.log2() + self.delta
    }
}
