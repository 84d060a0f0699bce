//! Complex matrix helpers on top of `nalgebra`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

#[inline]
pub fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Trace of a square complex matrix.
pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// tr(A·B) without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// u^H · M · v
pub fn quad_form(u: &CVec, m: &CMat, v: &CVec) -> C64 {
    u.dotc(&(m * v))
}

/// Hermitian part (M + M^H)/2, used to scrub round-off asymmetry.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

/// Hermitian PSD square root by eigendecomposition; small negative
/// eigenvalues from round-off are clamped to zero.
pub fn hermitian_sqrt(m: &CMat) -> CMat {
    let eig = hermitian_part(m).symmetric_eigen();
    let n = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    hermitian_part(&(scaled * eig.eigenvectors.adjoint()))
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hermitian_pd_inverse(m: &CMat) -> Result<CMat> {
    let not_pd = || Error::Degenerate("matrix is not positive definite".into());
    if is_diagonal(m, 0.0) {
        let d = m.diagonal();
        if d.iter().any(|z| !(z.re > 0.0) || z.im != 0.0) {
            return Err(not_pd());
        }
        return Ok(CMat::from_diagonal(&d.map(|z| c(1.0 / z.re))));
    }
    let chol = hermitian_part(m).cholesky().ok_or_else(not_pd)?;
    // complex Cholesky takes square roots of negative pivots instead of failing
    if chol.l_dirty().diagonal().iter().any(|z| !(z.re > 0.0) || z.im.abs() > 1e-12 * z.re) {
        return Err(not_pd());
    }
    Ok(hermitian_part(&chol.inverse()))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_part(m).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn is_diagonal(m: &CMat, tol: f64) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)].norm() <= tol))
}
