//! Traceability measures along a homotopy curve: total curvature and the
//! admissible predictor radius.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{compute_tangent, CurvePoint};
use crate::discretization::Homotopy;
use crate::solver::{newton_solve, NewtonConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Arclength spacing of the sampled curve.
    pub ds: f64,
    pub n_gamma: usize,
    /// Offset for the curvature stencil; half of `ds` when absent.
    pub fd_step: Option<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { ds: 0.05, n_gamma: 32, fd_step: None }
    }
}

impl MetricsConfig {
    pub fn fd_step(&self) -> f64 {
        self.fd_step.unwrap_or(0.5 * self.ds)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.ds > 0.0) {
            return Err(format!("metrics.ds = {} must be > 0", self.ds));
        }
        if self.n_gamma < 8 {
            return Err(format!("metrics.n_gamma = {} must be >= 8", self.n_gamma));
        }
        if !(self.fd_step() > 0.0) {
            return Err(format!("metrics.fd_step = {} must be > 0", self.fd_step()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorRadius {
    pub r: f64,
    pub r_tilde: f64,
    /// Step along the tangent at which the predicted `lambda` reaches zero.
    pub gamma_max: f64,
    /// First grid value of gamma at which Newton failed.
    pub failed_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub s: f64,
    pub lambda: f64,
    /// `None` where the curvature stencil could not be corrected.
    pub kappa: Option<f64>,
    pub r: f64,
    pub r_tilde: f64,
    pub gamma_max: f64,
    pub samples_failed_at: Option<f64>,
    /// First-order predictor error scale `s_tot^2 kappa`.
    pub err_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSweep {
    pub s_tot: f64,
    pub records: Vec<MetricsRecord>,
}

/// Offset point `q(s +- h)` reached by predicting along the tangent and
/// correcting at frozen lambda.
fn offset_point<H: Homotopy + ?Sized>(
    problem: &H,
    point: &CurvePoint,
    h: f64,
    newton: &NewtonConfig,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let lambda = point.lambda + h * point.tangent_lambda();
    if !(0.0..=1.0).contains(&lambda) {
        return None;
    }
    let x0: Vec<f64> = point.x.iter().zip(point.tangent_x()).map(|(x, t)| x + h * t).collect();
    let report = newton_solve(problem, lambda, &x0, newton).ok()?;
    if !report.converged() {
        return None;
    }
    let tangent = compute_tangent(problem, &report.x_final, lambda, Some(&point.tangent)).ok()?;
    let mut q = report.x_final;
    q.push(lambda);
    Some((q, tangent))
}

/// Central-difference curvature `|dt/ds|` at a curve point, measured over
/// the chord between the two corrected offset points.
pub fn curvature<H: Homotopy + ?Sized>(
    problem: &H,
    point: &CurvePoint,
    fd_step: f64,
    newton: &NewtonConfig,
) -> Option<f64> {
    let (q_plus, t_plus) = offset_point(problem, point, fd_step, newton)?;
    let (q_minus, t_minus) = offset_point(problem, point, -fd_step, newton)?;
    let dt: f64 = t_plus.iter().zip(&t_minus).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let ds: f64 = q_plus.iter().zip(&q_minus).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    (ds > 0.0).then(|| dt / ds)
}

/// Longest prefix of the tangent ray (on a uniform gamma grid up to the
/// point where the predicted lambda hits zero) from which Newton converges
/// at every grid value.
pub fn predictor_radius<H: Homotopy + ?Sized>(
    problem: &H,
    point: &CurvePoint,
    newton: &NewtonConfig,
    n_gamma: usize,
) -> PredictorRadius {
    let t_lambda = point.tangent_lambda().abs();
    let lambda = point.lambda;
    if lambda <= 0.0 || t_lambda == 0.0 {
        return PredictorRadius { r: 0.0, r_tilde: 0.0, gamma_max: 0.0, failed_at: None };
    }
    let gamma_max = lambda / t_lambda;
    let mut r = 0.0;
    let mut failed_at = None;
    for j in 1..=n_gamma {
        let gamma = gamma_max * j as f64 / n_gamma as f64;
        let lambda_pred = if j == n_gamma { 0.0 } else { (lambda - gamma * t_lambda).max(0.0) };
        let x0: Vec<f64> = point.x.iter().zip(point.tangent_x()).map(|(x, t)| x + gamma * t).collect();
        let ok = newton_solve(problem, lambda_pred, &x0, newton).is_ok_and(|rep| rep.converged());
        if !ok {
            failed_at = Some(gamma);
            break;
        }
        r = gamma;
    }
    let r_tilde = if failed_at.is_none() { 1.0 } else { (r * t_lambda / lambda).clamp(0.0, 1.0) };
    PredictorRadius { r, r_tilde, gamma_max, failed_at }
}

/// Metrics at every interior point of an arclength-sampled curve.
pub fn sweep_metrics<H: Homotopy + Sync + ?Sized>(
    problem: &H,
    curve: &[CurvePoint],
    cfg: &MetricsConfig,
    newton: &NewtonConfig,
) -> MetricsSweep {
    let s_tot = curve.last().map_or(0.0, |p| p.arclength);
    if curve.len() < 3 {
        return MetricsSweep { s_tot, records: Vec::new() };
    }
    let fd_step = cfg.fd_step();
    let records = curve[1..curve.len() - 1]
        .par_iter()
        .map(|point| {
            let kappa = curvature(problem, point, fd_step, newton);
            let radius = predictor_radius(problem, point, newton, cfg.n_gamma);
            MetricsRecord {
                s: point.arclength,
                lambda: point.lambda,
                kappa,
                r: radius.r,
                r_tilde: radius.r_tilde,
                gamma_max: radius.gamma_max,
                samples_failed_at: radius.failed_at,
                err_scale: kappa.map(|k| s_tot * s_tot * k),
            }
        })
        .collect();
    MetricsSweep { s_tot, records }
}
