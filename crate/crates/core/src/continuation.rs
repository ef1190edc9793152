//! Predictor-corrector tracing of homotopy curves from `lambda = 1` down to
//! `lambda = 0`.
//!
//! The predictor is a first-order Euler step along the unit tangent; the
//! corrector is plain Newton at the predicted (frozen) `lambda`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::{DiscretizationError, Homotopy};
use crate::solver::{newton_solve, LinearSolveError, NewtonConfig, NewtonReport};

/// Tangents whose `lambda` component is smaller than this are treated as
/// fold points.
const FOLD_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("target-only problems have no auxiliary start point")]
    NoAuxiliary,
    #[error("corrector failed on the auxiliary problem at lambda = 1 ({})", .0.verdict.as_str())]
    AuxiliaryFailed(Box<NewtonReport>),
    #[error("singular Jacobian while computing the tangent at lambda = {lambda}: {source}")]
    Fold { lambda: f64, source: LinearSolveError },
    #[error("curve turned back in lambda at {lambda} (fold point)")]
    Reversal { lambda: f64 },
    #[error("step size underflow below {min_step:e} after lambda = {}", .partial.last().map_or(f64::NAN, |p| p.lambda))]
    TraceFailure { partial: Vec<CurvePoint>, min_step: f64 },
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
}

impl ContinuationError {
    /// Last accepted point of a failed trace.
    pub fn last_good(&self) -> Option<&CurvePoint> {
        match self {
            Self::TraceFailure { partial, .. } => partial.last(),
            _ => None,
        }
    }
}

/// A corrected point on the homotopy curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub x: Vec<f64>,
    pub lambda: f64,
    /// Unit tangent in `(X, lambda)` space; the last entry is the `lambda`
    /// component.
    pub tangent: Vec<f64>,
    pub arclength: f64,
    pub corrector_iters: usize,
}

impl CurvePoint {
    pub fn tangent_x(&self) -> &[f64] {
        &self.tangent[..self.x.len()]
    }

    pub fn tangent_lambda(&self) -> f64 {
        self.tangent[self.x.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    #[default]
    LambdaStepping,
    ArclengthStepping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub dlambda_init: f64,
    pub dlambda_min: f64,
    pub dlambda_max: f64,
    pub grow: f64,
    pub shrink: f64,
    /// Grow the step only after corrections needing at most this many
    /// iterations.
    pub grow_max_iters: usize,
    pub mode: StepMode,
    /// Arclength step in arclength mode.
    pub ds: f64,
    /// Time step whose homotopy is traced by the `trace` command.
    pub time_step_index: usize,
    #[serde(skip)]
    pub newton: NewtonConfig,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            dlambda_init: 0.25,
            dlambda_min: 1e-4,
            dlambda_max: 1.0,
            grow: 1.5,
            shrink: 0.5,
            grow_max_iters: 5,
            mode: StepMode::LambdaStepping,
            ds: 0.05,
            time_step_index: 0,
            newton: NewtonConfig::default(),
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.dlambda_min && self.dlambda_min <= self.dlambda_init) {
            return Err(format!(
                "trace: need 0 < dlambda_min ({}) <= dlambda_init ({})",
                self.dlambda_min, self.dlambda_init
            ));
        }
        if !(self.dlambda_init <= self.dlambda_max && self.dlambda_max <= 1.0) {
            return Err(format!(
                "trace: need dlambda_init ({}) <= dlambda_max ({}) <= 1",
                self.dlambda_init, self.dlambda_max
            ));
        }
        if !(self.grow >= 1.0) {
            return Err(format!("trace.grow = {} must be >= 1", self.grow));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(format!("trace.shrink = {} must lie in (0, 1)", self.shrink));
        }
        if !(self.ds > 0.0) {
            return Err(format!("trace.ds = {} must be > 0", self.ds));
        }
        Ok(())
    }
}

/// Hook for problems whose auxiliary endpoint needs a specific initial
/// guess and that may lack an auxiliary problem altogether.
pub trait Traceable: Homotopy {
    fn has_auxiliary(&self) -> bool {
        true
    }

    fn auxiliary_guess(&self) -> Vec<f64>;
}

impl Traceable for crate::discretization::HomotopyProblem {
    fn has_auxiliary(&self) -> bool {
        self.kind != crate::discretization::HomotopyKind::TargetOnly
    }

    fn auxiliary_guess(&self) -> Vec<f64> {
        self.step.s_prev.clone()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unit tangent from `dH/dX t_x = -dH/dlambda`, oriented toward decreasing
/// `lambda` (no reference) or continuing `prev`.
pub fn compute_tangent<H: Homotopy + ?Sized>(
    problem: &H,
    x: &[f64],
    lambda: f64,
    prev: Option<&[f64]>,
) -> Result<Vec<f64>, ContinuationError> {
    let jx = problem.jac_x(x, lambda)?;
    let jl = problem.jac_lambda(x, lambda)?;
    let rhs: Vec<f64> = jl.iter().map(|v| -v).collect();
    let tx = jx.solve(&rhs).map_err(|source| ContinuationError::Fold { lambda, source })?;
    let mut t = tx;
    t.push(1.0);
    let norm = norm2(&t);
    t.iter_mut().for_each(|v| *v /= norm);
    let flip = match prev {
        Some(p) => dot(&t, p) < 0.0,
        None => t[t.len() - 1] > 0.0,
    };
    if flip {
        t.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(t)
}

/// Corrected start point at `lambda = 1`.
pub fn solve_auxiliary<H: Traceable + ?Sized>(problem: &H, cfg: &TraceConfig) -> Result<CurvePoint, ContinuationError> {
    if !problem.has_auxiliary() {
        return Err(ContinuationError::NoAuxiliary);
    }
    let report = newton_solve(problem, 1.0, &problem.auxiliary_guess(), &cfg.newton)?;
    if !report.converged() {
        return Err(ContinuationError::AuxiliaryFailed(Box::new(report)));
    }
    let tangent = compute_tangent(problem, &report.x_final, 1.0, None)?;
    Ok(CurvePoint { x: report.x_final, lambda: 1.0, tangent, arclength: 0.0, corrector_iters: report.iterations })
}

/// Result of a single predictor-corrector step attempt.
enum Attempt {
    Accepted(CurvePoint),
    Rejected,
}

fn attempt_step<H: Homotopy + ?Sized>(
    problem: &H,
    from: &CurvePoint,
    h: f64,
    lambda_new: f64,
    newton: &NewtonConfig,
) -> Result<Attempt, ContinuationError> {
    let x_pred: Vec<f64> = from.x.iter().zip(from.tangent_x()).map(|(x, t)| x + h * t).collect();
    let report = newton_solve(problem, lambda_new, &x_pred, newton)?;
    if !report.converged() {
        return Ok(Attempt::Rejected);
    }
    let tangent = compute_tangent(problem, &report.x_final, lambda_new, Some(&from.tangent))?;
    if tangent[tangent.len() - 1] > 0.0 {
        return Err(ContinuationError::Reversal { lambda: lambda_new });
    }
    let mut chord: Vec<f64> = report.x_final.iter().zip(&from.x).map(|(a, b)| a - b).collect();
    chord.push(lambda_new - from.lambda);
    Ok(Attempt::Accepted(CurvePoint {
        x: report.x_final,
        lambda: lambda_new,
        tangent,
        arclength: from.arclength + norm2(&chord),
        corrector_iters: report.iterations,
    }))
}

/// Traces the curve from the auxiliary solution to `lambda = 0`, returning
/// every accepted point including both endpoints.
pub fn trace<H: Traceable + ?Sized>(problem: &H, cfg: &TraceConfig) -> Result<Vec<CurvePoint>, ContinuationError> {
    let start = solve_auxiliary(problem, cfg)?;
    trace_from(problem, start, cfg)
}

/// Continues tracing from an already corrected point.
pub fn trace_from<H: Homotopy + ?Sized>(
    problem: &H,
    start: CurvePoint,
    cfg: &TraceConfig,
) -> Result<Vec<CurvePoint>, ContinuationError> {
    let mut points = vec![start];
    let mut dlambda = cfg.dlambda_init;
    let mut h_arc = cfg.ds;

    loop {
        let current = points.last().expect("trace holds its start point");
        if current.lambda <= 0.0 {
            break;
        }
        let t_lambda = current.tangent_lambda();
        if t_lambda.abs() < FOLD_TOL {
            return Err(ContinuationError::Reversal { lambda: current.lambda });
        }
        let (h, lambda_new, size) = match cfg.mode {
            StepMode::LambdaStepping => {
                let dl = dlambda.min(current.lambda);
                let lambda_new = if dl >= current.lambda { 0.0 } else { current.lambda - dl };
                ((current.lambda - lambda_new) / t_lambda.abs(), lambda_new, dl)
            }
            StepMode::ArclengthStepping => {
                let lambda_new = current.lambda + h_arc * t_lambda;
                if lambda_new <= 0.0 {
                    (current.lambda / t_lambda.abs(), 0.0, h_arc)
                } else {
                    (h_arc, lambda_new, h_arc)
                }
            }
        };

        match attempt_step(problem, current, h, lambda_new, &cfg.newton)? {
            Attempt::Accepted(point) => {
                let easy = point.corrector_iters <= cfg.grow_max_iters;
                points.push(point);
                match cfg.mode {
                    StepMode::LambdaStepping => {
                        dlambda = if easy { (size * cfg.grow).min(cfg.dlambda_max) } else { size };
                    }
                    StepMode::ArclengthStepping => h_arc = cfg.ds,
                }
            }
            Attempt::Rejected => {
                let next = size * cfg.shrink;
                if next < cfg.dlambda_min {
                    return Err(ContinuationError::TraceFailure { partial: points, min_step: cfg.dlambda_min });
                }
                match cfg.mode {
                    StepMode::LambdaStepping => dlambda = next,
                    StepMode::ArclengthStepping => h_arc = next,
                }
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Tridiagonal;

    /// Scalar curve `X = lambda^2`.
    struct Parabola;

    impl Homotopy for Parabola {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&self, x: &[f64], l: f64) -> Result<Vec<f64>, DiscretizationError> {
            self.check_args(x, l)?;
            Ok(vec![x[0] - l * l])
        }
        fn jac_x(&self, _x: &[f64], _l: f64) -> Result<Tridiagonal, DiscretizationError> {
            Ok(Tridiagonal { sub: vec![], diag: vec![1.0], sup: vec![] })
        }
        fn jac_lambda(&self, _x: &[f64], l: f64) -> Result<Vec<f64>, DiscretizationError> {
            Ok(vec![-2.0 * l])
        }
    }

    impl Traceable for Parabola {
        fn auxiliary_guess(&self) -> Vec<f64> {
            vec![0.9]
        }
    }

    #[test]
    fn parabola_tangent_and_trace() {
        let t = compute_tangent(&Parabola, &[0.25], 0.5, None).unwrap();
        let n = 2f64.sqrt();
        assert!((t[0] + 1.0 / n).abs() < 1e-14 && (t[1] + 1.0 / n).abs() < 1e-14);

        let cfg = TraceConfig::default();
        let curve = trace(&Parabola, &cfg).unwrap();
        assert_eq!(curve.first().unwrap().lambda, 1.0);
        assert_eq!(curve.last().unwrap().lambda, 0.0);
        for w in curve.windows(2) {
            assert!(w[1].lambda < w[0].lambda);
            assert!(w[1].arclength > w[0].arclength);
            assert!(dot(&w[0].tangent, &w[1].tangent) > 0.0);
        }
        for p in &curve {
            assert!((p.x[0] - p.lambda * p.lambda).abs() <= 1e-9);
            assert!((norm2(&p.tangent) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn arclength_mode_steps_are_uniform() {
        let cfg = TraceConfig { mode: StepMode::ArclengthStepping, ds: 0.1, ..Default::default() };
        let curve = trace(&Parabola, &cfg).unwrap();
        // parabola from (1, 1) to (0, 0) has arclength ~1.4789
        assert!(curve.len() >= 15);
        for w in curve[..curve.len() - 1].windows(2) {
            assert!((w[1].arclength - w[0].arclength - 0.1).abs() < 5e-3);
        }
        assert_eq!(curve.last().unwrap().lambda, 0.0);
        assert!((curve.last().unwrap().arclength - 1.478_942_857_5).abs() < 5e-3);
    }

    #[test]
    fn config_validation() {
        assert!(TraceConfig::default().validate().is_ok());
        let bad = TraceConfig { dlambda_min: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
