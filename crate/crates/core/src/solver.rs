//! Tridiagonal linear algebra and the full-step Newton corrector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::{DiscretizationError, Homotopy};

/// Pivots smaller than this in magnitude are treated as singular.
pub const PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearSolveError {
    #[error("singular tridiagonal system: pivot {pivot:e} at row {row}")]
    Singular { row: usize, pivot: f64 },
    #[error("inconsistent band lengths: sub {sub}, diag {diag}, sup {sup}, rhs {rhs}")]
    Shape { sub: usize, diag: usize, sup: usize, rhs: usize },
}

/// Square tridiagonal matrix stored by bands. `sub[i]` sits at `(i+1, i)`,
/// `sup[i]` at `(i, i+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self { sub: vec![0.0; off], diag: vec![0.0; n], sup: vec![0.0; off] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// `self * a + other * b`, band by band.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let mix = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| a * p + b * q).collect();
        Self { sub: mix(&self.sub, &other.sub), diag: mix(&self.diag, &other.diag), sup: mix(&self.sup, &other.sup) }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i + 1][i] = self.sub[i];
                m[i][i + 1] = self.sup[i];
            }
        }
        m
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
        solve_tridiagonal(&self.sub, &self.diag, &self.sup, rhs)
    }
}

/// Thomas elimination without pivoting.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
    let n = diag.len();
    let off = n.saturating_sub(1);
    if sub.len() != off || sup.len() != off || rhs.len() != n {
        return Err(LinearSolveError::Shape { sub: sub.len(), diag: n, sup: sup.len(), rhs: rhs.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() < PIVOT_TOL || !pivot.is_finite() {
        return Err(LinearSolveError::Singular { row: 0, pivot });
    }
    if n > 1 {
        c[0] = sup[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i - 1] * c[i - 1];
        if pivot.abs() < PIVOT_TOL || !pivot.is_finite() {
            return Err(LinearSolveError::Singular { row: i, pivot });
        }
        if i < off {
            c[i] = sup[i] / pivot;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..off).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.abs() > m || x.is_nan() { x.abs() } else { m })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// Residual infinity-norm tolerance.
    pub tol_abs: f64,
    /// Update infinity-norm below which iteration stops.
    pub tol_step: f64,
    pub max_iter: usize,
    /// Abort once the residual exceeds this multiple of the initial residual.
    pub diverge_factor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { tol_abs: 1e-9, tol_step: 1e-10, max_iter: 25, diverge_factor: 1e4 }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tol_abs > 0.0) {
            return Err(format!("solver.tol_abs = {} must be > 0", self.tol_abs));
        }
        if !(self.tol_step > 0.0) {
            return Err(format!("solver.tol_step = {} must be > 0", self.tol_step));
        }
        if self.max_iter < 1 {
            return Err("solver.max_iter must be >= 1".into());
        }
        if !(self.diverge_factor > 1.0) {
            return Err(format!("solver.diverge_factor = {} must be > 1", self.diverge_factor));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonVerdict {
    Converged,
    MaxIter,
    DivergedGrowth,
    DomainEscape,
    /// Jacobian pivot vanished (fold or ill-conditioned point).
    Singular,
    /// Update fell below `tol_step` while the residual was still above `tol_abs`.
    Stagnated,
}

impl NewtonVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIter => "max_iter",
            Self::DivergedGrowth => "diverged_growth",
            Self::DomainEscape => "domain_escape",
            Self::Singular => "singular",
            Self::Stagnated => "stagnated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub verdict: NewtonVerdict,
    pub iterations: usize,
    /// Residual infinity-norms, starting with the initial guess.
    pub residual_history: Vec<f64>,
    pub x_final: Vec<f64>,
}

impl NewtonReport {
    pub fn converged(&self) -> bool {
        self.verdict == NewtonVerdict::Converged
    }
}

/// Full-step Newton on `H(.; lambda) = 0`.
pub fn newton_solve<H: Homotopy + ?Sized>(
    problem: &H,
    lambda: f64,
    x0: &[f64],
    cfg: &NewtonConfig,
) -> Result<NewtonReport, DiscretizationError> {
    newton_solve_observed(problem, lambda, x0, cfg, |_, _| {})
}

/// As [`newton_solve`], calling `observer(k, x_k)` for the initial guess
/// (k = 0) and every subsequent iterate.
pub fn newton_solve_observed<H, O>(
    problem: &H,
    lambda: f64,
    x0: &[f64],
    cfg: &NewtonConfig,
    mut observer: O,
) -> Result<NewtonReport, DiscretizationError>
where
    H: Homotopy + ?Sized,
    O: FnMut(usize, &[f64]),
{
    problem.check_args(x0, lambda)?;
    let mut x = x0.to_vec();
    observer(0, &x);

    let finish = |verdict, iterations, residual_history, x_final| {
        Ok(NewtonReport { verdict, iterations, residual_history, x_final })
    };

    let mut r = match problem.residual(&x, lambda) {
        Ok(r) => r,
        Err(DiscretizationError::Physics(_)) => return finish(NewtonVerdict::DomainEscape, 0, vec![f64::INFINITY], x),
        Err(e) => return Err(e),
    };
    let r0 = norm_inf(&r);
    let mut history = vec![r0];
    if r0 <= cfg.tol_abs {
        return finish(NewtonVerdict::Converged, 0, history, x);
    }

    for k in 1..=cfg.max_iter {
        let jac = match problem.jac_x(&x, lambda) {
            Ok(j) => j,
            Err(DiscretizationError::Physics(_)) => return finish(NewtonVerdict::DomainEscape, k - 1, history, x),
            Err(e) => return Err(e),
        };
        let dx = match jac.solve(&r) {
            Ok(dx) => dx,
            Err(_) => return finish(NewtonVerdict::Singular, k - 1, history, x),
        };
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi -= di;
        }
        observer(k, &x);
        r = match problem.residual(&x, lambda) {
            Ok(r) => r,
            Err(DiscretizationError::Physics(_)) => {
                history.push(f64::INFINITY);
                return finish(NewtonVerdict::DomainEscape, k, history, x);
            }
            Err(e) => return Err(e),
        };
        let rn = norm_inf(&r);
        history.push(rn);
        if rn <= cfg.tol_abs {
            return finish(NewtonVerdict::Converged, k, history, x);
        }
        if !rn.is_finite() || rn > cfg.diverge_factor * r0 {
            return finish(NewtonVerdict::DivergedGrowth, k, history, x);
        }
        if norm_inf(&dx) <= cfg.tol_step {
            return finish(NewtonVerdict::Stagnated, k, history, x);
        }
    }
    finish(NewtonVerdict::MaxIter, cfg.max_iter, history, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual_check(sub: &[f64], diag: &[f64], sup: &[f64], x: &[f64], b: &[f64]) -> f64 {
        let m = Tridiagonal { sub: sub.to_vec(), diag: diag.to_vec(), sup: sup.to_vec() };
        let ax = m.mul_vec(x);
        norm_inf(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>())
    }

    #[test]
    fn identity_system() {
        let r = vec![1.0, -2.0, 3.5, 0.25];
        let x = solve_tridiagonal(&[0.0; 3], &[1.0; 4], &[0.0; 3], &r).unwrap();
        assert_eq!(x, r);
    }

    #[test]
    fn small_symmetric_system() {
        let (sub, diag, sup, rhs) = ([1.0, 1.0], [2.0, 2.0, 2.0], [1.0, 1.0], [4.0, 8.0, 8.0]);
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        assert!(residual_check(&sub, &diag, &sup, &x, &rhs) <= 1e-12);
    }

    #[test]
    fn random_diagonally_dominant_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let sub: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sup: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(2.5..4.0)).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        assert!(residual_check(&sub, &diag, &sup, &x, &rhs) <= 1e-10);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let err = solve_tridiagonal(&[1.0], &[1.0, 1.0], &[1.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, LinearSolveError::Singular { row: 1, .. }));
        assert!(matches!(
            solve_tridiagonal(&[1.0], &[1.0, 1.0, 1.0], &[1.0], &[1.0, 1.0, 1.0]),
            Err(LinearSolveError::Shape { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(NewtonConfig::default().validate().is_ok());
        let bad = NewtonConfig { diverge_factor: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
