//! A small geometric-programming solver.
//!
//! With `y = ln x` a monomial becomes affine and a posynomial constraint
//! `Σ c_j Π x^a_j ≤ 1` becomes the convex `ln Σ exp(ln c_j + a_jᵀy) ≤ 0`. The
//! problem is solved by a log-barrier method with Newton centering. Each
//! variable is also kept in a wide box `|y| ≤ LOG_BOX`, which keeps every
//! Newton system positive definite and exposes unbounded problems as iterates
//! that run into the box.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Variables live in `[e^-LOG_BOX, e^LOG_BOX]`.
pub const LOG_BOX: f64 = 80.0;

const MAX_CENTERING_STEPS: usize = 200;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GpError {
    #[error("the constraints admit no strictly feasible point")]
    Infeasible,
    #[error("the objective is unbounded below")]
    Unbounded,
    #[error("iteration limit reached")]
    MaxIterations { best: Vec<f64> },
    #[error("malformed problem: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// `coeff · Π x_i^e_i` with `coeff > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<(usize, f64)>,
}

impl Monomial {
    pub fn new(coeff: f64, exponents: Vec<(usize, f64)>) -> Self {
        Self { coeff, exponents }
    }

    pub fn constant(coeff: f64) -> Self {
        Self::new(coeff, Vec::new())
    }

    /// The single variable `x_i`.
    pub fn var(i: usize) -> Self {
        Self::new(1.0, vec![(i, 1.0)])
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.coeff *= factor;
        self
    }

    pub fn times(mut self, other: &Monomial) -> Self {
        self.coeff *= other.coeff;
        self.exponents.extend_from_slice(&other.exponents);
        self
    }

    pub fn pow(mut self, e: f64) -> Self {
        self.coeff = self.coeff.powf(e);
        self.exponents.iter_mut().for_each(|(_, a)| *a *= e);
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents.iter().fold(self.coeff, |acc, &(i, a)| acc * x[i].powf(a))
    }
}

/// A sum of monomials, used as the constraint `Σ terms ≤ 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Posynomial {
    pub terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Self { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }
}

/// Minimize a monomial subject to posynomial constraints `≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpProblem {
    pub num_vars: usize,
    pub objective: Monomial,
    pub constraints: Vec<Posynomial>,
}

impl GpProblem {
    /// Largest `posynomial(x) − 1` over the constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.eval(x) - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }

    fn check(&self) -> Result<(), GpError> {
        let bad_mono = |m: &Monomial| {
            !(m.coeff > 0.0 && m.coeff.is_finite())
                || m.exponents.iter().any(|&(i, a)| i >= self.num_vars || !a.is_finite())
        };
        if bad_mono(&self.objective) {
            return Err(GpError::Invalid("objective needs a positive coefficient and valid exponents".into()));
        }
        for (idx, c) in self.constraints.iter().enumerate() {
            if c.terms.is_empty() || c.terms.iter().any(bad_mono) {
                return Err(GpError::Invalid(format!("constraint {idx} is empty or has a non-positive term")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GpOptions {
    /// Target duality gap in log units, i.e. relative objective accuracy.
    pub gap_tol: f64,
    pub max_newton: usize,
    pub barrier_growth: f64,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-8, max_newton: 3000, barrier_growth: 20.0 }
    }
}

#[derive(Debug, Clone)]
pub struct GpSolution {
    /// Variable values in the linear domain.
    pub x: Vec<f64>,
    pub objective: f64,
    /// max(stationarity, duality gap) of the barrier KKT system.
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

/// One affine term `b + aᵀy` of a log-sum-exp.
type Term = (f64, Vec<(usize, f64)>);

struct Compiled {
    n: usize,
    objective: DVector<f64>,
    constraints: Vec<Vec<Term>>,
}

fn compile_monomial(m: &Monomial) -> Term {
    (m.coeff.ln(), m.exponents.clone())
}

impl Compiled {
    fn num_barrier_terms(&self) -> usize {
        self.constraints.len() + 2 * self.n
    }

    /// ln Σ exp(b + aᵀy) and the softmax weights of its terms.
    fn lse(terms: &[Term], y: &DVector<f64>) -> (f64, Vec<f64>) {
        let vals: Vec<f64> = terms.iter().map(|(b, a)| b + a.iter().map(|&(i, e)| e * y[i]).sum::<f64>()).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = vals.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        (max + total.ln(), weights.into_iter().map(|w| w / total).collect())
    }

    /// Barrier value, or `None` outside the strict interior.
    fn value(&self, y: &DVector<f64>, t: f64) -> Option<f64> {
        let mut v = t * self.objective.dot(y);
        for c in &self.constraints {
            let f = Self::lse(c, y).0;
            if !(f < 0.0) {
                return None;
            }
            v -= (-f).ln();
        }
        for &yi in y.iter() {
            if !(yi.abs() < LOG_BOX) {
                return None;
            }
            v -= (LOG_BOX - yi).ln() + (LOG_BOX + yi).ln();
        }
        Some(v)
    }

    fn gradient_hessian(&self, y: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut g = &self.objective * t;
        let mut h = DMatrix::zeros(n, n);
        for c in &self.constraints {
            let (f, w) = Self::lse(c, y);
            let mut grad_f = DVector::zeros(n);
            let mut hess_f = DMatrix::zeros(n, n);
            for ((_, a), &wj) in c.iter().zip(&w) {
                for &(i, ei) in a {
                    grad_f[i] += wj * ei;
                    for &(k, ek) in a {
                        hess_f[(i, k)] += wj * ei * ek;
                    }
                }
            }
            hess_f -= &grad_f * grad_f.transpose();
            let s = -f;
            g += &grad_f / s;
            h += hess_f / s + (&grad_f * grad_f.transpose()) / (s * s);
        }
        for i in 0..n {
            let (lo, hi) = (LOG_BOX + y[i], LOG_BOX - y[i]);
            g[i] += 1.0 / hi - 1.0 / lo;
            h[(i, i)] += 1.0 / (hi * hi) + 1.0 / (lo * lo);
        }
        (g, h)
    }
}

enum Stop {
    Converged { t: f64, stationarity: f64 },
    EarlyExit,
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Result<DVector<f64>, GpError> {
    let n = g.len();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..n {
            hr[(i, i)] += ridge;
        }
        if let Some(ch) = hr.cholesky() {
            let d = ch.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return Ok(d);
            }
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
    }
    Err(GpError::Numerical("Newton system could not be factorized".into()))
}

/// Barrier path from a strictly feasible `y`. `early` lets phase I stop as
/// soon as it has found what it needs.
fn barrier_path(
    problem: &Compiled,
    y: &mut DVector<f64>,
    options: &GpOptions,
    steps: &mut usize,
    early: &dyn Fn(&DVector<f64>) -> bool,
) -> Result<Stop, GpError> {
    let m = problem.num_barrier_terms() as f64;
    let mut t = 1.0;
    loop {
        // centering
        for _ in 0..MAX_CENTERING_STEPS {
            if early(y) {
                return Ok(Stop::EarlyExit);
            }
            *steps += 1;
            if *steps > options.max_newton {
                return Err(GpError::MaxIterations { best: y.iter().map(|v| v.exp()).collect() });
            }
            let (g, h) = problem.gradient_hessian(y, t);
            let d = newton_direction(&g, &h)?;
            let decrement = -g.dot(&d);
            if decrement / 2.0 <= 1e-20 {
                break;
            }
            // inside the quadratic-convergence region a full step is safe and
            // avoids comparing barrier values that differ below round-off
            if decrement < 0.05 {
                let cand = &*y + &d;
                if problem.value(&cand, t).is_some() {
                    let moved = (&cand - &*y).amax() > 1e-15 * (1.0 + y.amax());
                    *y = cand;
                    if moved {
                        continue;
                    }
                    break;
                }
            }
            let phi = problem.value(y, t).ok_or_else(|| GpError::Numerical("left the interior".into()))?;
            let mut alpha = 1.0;
            let accepted = loop {
                let cand = &*y + &d * alpha;
                if let Some(v) = problem.value(&cand, t) {
                    if v <= phi - 0.01 * alpha * decrement {
                        break Some(cand);
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-16 {
                    break None;
                }
            };
            match accepted {
                // a step that changes nothing at working precision ends centering
                Some(cand) if (&cand - &*y).amax() > 1e-15 * (1.0 + y.amax()) => *y = cand,
                Some(cand) => {
                    *y = cand;
                    break;
                }
                None => break,
            }
        }
        if m / t < options.gap_tol {
            let (g, _) = problem.gradient_hessian(y, t);
            return Ok(Stop::Converged { t, stationarity: g.amax() / t });
        }
        t *= options.barrier_growth;
    }
}

fn compile(problem: &GpProblem) -> Compiled {
    let mut objective = DVector::zeros(problem.num_vars);
    for &(i, a) in &problem.objective.exponents {
        objective[i] += a;
    }
    let norm = objective.amax();
    if norm > 0.0 {
        objective /= norm;
    }
    Compiled {
        n: problem.num_vars,
        objective,
        constraints: problem.constraints.iter().map(|c| c.terms.iter().map(compile_monomial).collect()).collect(),
    }
}

/// Finds a strictly feasible log-domain point or proves there is none.
fn phase_one(problem: &Compiled, start: DVector<f64>, options: &GpOptions, steps: &mut usize) -> Result<DVector<f64>, GpError> {
    let n = problem.n;
    let worst = problem.constraints.iter().map(|c| Compiled::lse(c, &start).0).fold(f64::NEG_INFINITY, f64::max);
    if worst < -1e-3 {
        return Ok(start);
    }
    // every term gains a factor 1/s; minimize s
    let slack = n;
    let mut objective = DVector::zeros(n + 1);
    objective[slack] = 1.0;
    let augmented = Compiled {
        n: n + 1,
        objective,
        constraints: problem
            .constraints
            .iter()
            .map(|c| c.iter().map(|(b, a)| (*b, a.iter().copied().chain([(slack, -1.0)]).collect())).collect())
            .collect(),
    };
    let s0 = worst + 1.0;
    if s0 >= LOG_BOX {
        return Err(GpError::Numerical("starting point is too far from feasibility".into()));
    }
    let mut y = start.clone().resize_vertically(n + 1, s0);
    let found = |y: &DVector<f64>| y[slack] < -1e-3;
    let stop = barrier_path(&augmented, &mut y, options, steps, &found)?;
    match stop {
        Stop::EarlyExit => Ok(y.rows(0, n).into_owned()),
        Stop::Converged { .. } if y[slack] < -1e-9 => Ok(y.rows(0, n).into_owned()),
        Stop::Converged { .. } => Err(GpError::Infeasible),
    }
}

/// Solves `problem`, warm-starting from `initial` (linear domain) if given.
pub fn solve_gp(problem: &GpProblem, initial: Option<&[f64]>) -> Result<GpSolution, GpError> {
    solve_gp_with(problem, initial, &GpOptions::default())
}

pub fn solve_gp_with(problem: &GpProblem, initial: Option<&[f64]>, options: &GpOptions) -> Result<GpSolution, GpError> {
    problem.check()?;
    let n = problem.num_vars;
    let compiled = compile(problem);
    let start = match initial {
        Some(x) if x.len() == n && x.iter().all(|v| *v > 0.0 && v.is_finite()) => {
            DVector::from_iterator(n, x.iter().map(|v| v.ln().clamp(-LOG_BOX + 1.0, LOG_BOX - 1.0)))
        }
        Some(x) if x.len() != n => return Err(GpError::Invalid(format!("initial point has {} entries, expected {n}", x.len()))),
        _ => DVector::zeros(n),
    };
    let mut steps = 0;
    let mut y = phase_one(&compiled, start, options, &mut steps)?;
    let stop = barrier_path(&compiled, &mut y, options, &mut steps, &|_| false)?;
    let Stop::Converged { t, stationarity } = stop else { unreachable!("phase II never exits early") };
    if y.iter().any(|v| v.abs() > LOG_BOX - 1.0) {
        return Err(GpError::Unbounded);
    }
    let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
    Ok(GpSolution {
        objective: problem.objective.eval(&x),
        x,
        kkt_residual: stationarity.max(compiled.num_barrier_terms() as f64 / t),
        newton_steps: steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimize_x_above_three() {
        // x ≥ 3  ⇔  3/x ≤ 1
        let p = GpProblem {
            num_vars: 1,
            objective: Monomial::var(0),
            constraints: vec![Posynomial::new(vec![Monomial::new(3.0, vec![(0, -1.0)])])],
        };
        let s = solve_gp(&p, None).unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-6, "{:?}", s.x);
        assert!(s.kkt_residual <= 1e-6, "{s:?}");
    }

    #[test]
    fn maximize_chi_with_power_cap() {
        // max χ s.t. χ(p+1)/p ≤ 10, p ≤ 1  →  p = 1, χ = 5
        let p = GpProblem {
            num_vars: 2,
            objective: Monomial::new(1.0, vec![(0, -1.0)]),
            constraints: vec![
                Posynomial::new(vec![Monomial::new(0.1, vec![(0, 1.0)]), Monomial::new(0.1, vec![(0, 1.0), (1, -1.0)])]),
                Posynomial::new(vec![Monomial::var(1)]),
            ],
        };
        let s = solve_gp(&p, Some(&[1.0, 0.5])).unwrap();
        assert!((s.x[0] - 5.0).abs() < 1e-6 && (s.x[1] - 1.0).abs() < 1e-6, "{:?}", s.x);
        assert!(p.max_violation(&s.x) <= 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        // x ≤ 1 and x ≥ 2
        let p = GpProblem {
            num_vars: 1,
            objective: Monomial::var(0),
            constraints: vec![
                Posynomial::new(vec![Monomial::var(0)]),
                Posynomial::new(vec![Monomial::new(2.0, vec![(0, -1.0)])]),
            ],
        };
        assert_eq!(solve_gp(&p, None).unwrap_err(), GpError::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        // minimize x subject to x ≤ 1 only
        let p = GpProblem {
            num_vars: 1,
            objective: Monomial::var(0),
            constraints: vec![Posynomial::new(vec![Monomial::var(0)])],
        };
        assert_eq!(solve_gp(&p, None).unwrap_err(), GpError::Unbounded);
    }

    #[test]
    fn rejects_malformed_terms() {
        let p = GpProblem {
            num_vars: 1,
            objective: Monomial::var(0),
            constraints: vec![Posynomial::new(vec![Monomial::new(-1.0, vec![(0, 1.0)])])],
        };
        assert!(matches!(solve_gp(&p, None), Err(GpError::Invalid(_))));
    }

    #[test]
    fn badly_scaled_coefficients() {
        // minimize 1/x subject to 1e-16·x + 1e-20·x/y ≤ 1, y ≤ 1e3
        let p = GpProblem {
            num_vars: 2,
            objective: Monomial::new(1.0, vec![(0, -1.0)]),
            constraints: vec![
                Posynomial::new(vec![Monomial::new(1e-16, vec![(0, 1.0)]), Monomial::new(1e-20, vec![(0, 1.0), (1, -1.0)])]),
                Posynomial::new(vec![Monomial::new(1e-3, vec![(1, 1.0)])]),
            ],
        };
        let s = solve_gp(&p, None).unwrap();
        let x_star = 1.0 / (1e-16 + 1e-23);
        assert!((s.x[0] / x_star - 1.0).abs() < 1e-6);
        assert!(p.max_violation(&s.x) <= 0.0);
    }
}
