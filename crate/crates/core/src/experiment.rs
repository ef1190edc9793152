//! Scenario-level experiments (time marching, curve tracing, metric sweeps,
//! homotopy comparison) and their CSV rendering.
//!
//! Every CSV starts with `#`-prefixed lines carrying the tool version and
//! the fully resolved scenario; the remaining lines are deterministic.

use std::fmt::Write as _;

use crate::continuation::{trace, ContinuationError, CurvePoint, StepMode, TraceConfig};
use crate::discretization::{DiscretizationError, HomotopyKind, HomotopyProblem};
use crate::metrics::{sweep_metrics, MetricsRecord};
use crate::scenario::Scenario;
use crate::solver::newton_solve;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Outcome of advancing one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub success: bool,
    pub verdict: String,
    /// Predictor-corrector steps; 1 for a plain Newton solve.
    pub pc_steps: usize,
    /// Newton iterations over all accepted corrections.
    pub newton_iters: usize,
    /// New saturation on success, the previous one otherwise.
    pub profile: Vec<f64>,
}

fn continuation_verdict(err: &ContinuationError) -> String {
    match err {
        ContinuationError::NoAuxiliary => "no_auxiliary".into(),
        ContinuationError::AuxiliaryFailed(rep) => format!("auxiliary_{}", rep.verdict.as_str()),
        ContinuationError::Fold { .. } => "fold".into(),
        ContinuationError::Reversal { .. } => "reversal".into(),
        ContinuationError::TraceFailure { .. } => "trace_failure".into(),
        ContinuationError::Discretization(_) => "discretization_error".into(),
    }
}

/// One implicit step from `s_prev`, by plain Newton for `target_only` and
/// by continuation otherwise.
pub fn solve_step(scn: &Scenario, kind: HomotopyKind, s_prev: &[f64]) -> Result<StepOutcome, DiscretizationError> {
    let problem = scn.problem(kind, s_prev.to_vec())?;
    if kind == HomotopyKind::TargetOnly {
        let rep = newton_solve(&problem, 0.0, s_prev, &scn.solver)?;
        let success = rep.converged();
        return Ok(StepOutcome {
            success,
            verdict: rep.verdict.as_str().into(),
            pc_steps: 1,
            newton_iters: rep.iterations,
            profile: if success { rep.x_final } else { s_prev.to_vec() },
        });
    }
    Ok(match trace(&problem, &scn.trace_config()) {
        Ok(curve) => StepOutcome {
            success: true,
            verdict: "converged".into(),
            pc_steps: curve.len() - 1,
            newton_iters: curve.iter().map(|p| p.corrector_iters).sum(),
            profile: curve.last().expect("non-empty curve").x.clone(),
        },
        Err(ContinuationError::Discretization(e)) => return Err(e),
        Err(e) => {
            let partial: &[CurvePoint] = match &e {
                ContinuationError::TraceFailure { partial, .. } => partial,
                _ => &[],
            };
            StepOutcome {
                success: false,
                verdict: continuation_verdict(&e),
                pc_steps: partial.len().saturating_sub(1),
                newton_iters: partial.iter().map(|p| p.corrector_iters).sum(),
                profile: s_prev.to_vec(),
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step_index: usize,
    pub time: f64,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveRun {
    pub kind: HomotopyKind,
    pub cfl: f64,
    /// Marching stops after the first failed step, which is recorded.
    pub steps: Vec<StepRecord>,
}

impl SolveRun {
    pub fn success(&self) -> bool {
        self.steps.iter().all(|s| s.outcome.success)
    }

    pub fn final_profile(&self) -> Option<&[f64]> {
        self.steps.last().map(|s| s.outcome.profile.as_slice())
    }
}

/// Marches `n_steps` time steps (or fewer when a step fails).
pub fn march(scn: &Scenario, kind: HomotopyKind, n_steps: usize) -> Result<SolveRun, DiscretizationError> {
    let mut s = scn.initial_profile();
    let mut steps = Vec::with_capacity(n_steps);
    for step_index in 0..n_steps {
        let outcome = solve_step(scn, kind, &s)?;
        let failed = !outcome.success;
        s.clone_from(&outcome.profile);
        steps.push(StepRecord { step_index, time: (step_index + 1) as f64 * scn.time.tau, outcome });
        if failed {
            break;
        }
    }
    Ok(SolveRun { kind, cfl: scn.cfl(), steps })
}

pub fn run_solve(scn: &Scenario, kind: HomotopyKind) -> Result<SolveRun, DiscretizationError> {
    march(scn, kind, scn.time.n_steps)
}

/// Saturation entering the configured traced step, or the failed march
/// that prevented reaching it.
fn profile_before(scn: &Scenario, kind: HomotopyKind) -> Result<Result<Vec<f64>, String>, DiscretizationError> {
    let j = scn.trace.time_step_index;
    if j == 0 {
        return Ok(Ok(scn.initial_profile()));
    }
    let run = march(scn, kind, j)?;
    Ok(if run.success() {
        Ok(run.final_profile().expect("j >= 1 steps").to_vec())
    } else {
        let last = run.steps.last().expect("failed step recorded");
        Err(format!("time step {} failed ({})", last.step_index, last.outcome.verdict))
    })
}

#[derive(Debug, Clone)]
pub struct TraceRun {
    pub kind: HomotopyKind,
    pub step_index: usize,
    /// Accepted points; partial when tracing failed.
    pub points: Vec<CurvePoint>,
    pub error: Option<String>,
}

type Traced = (Option<HomotopyProblem>, Vec<CurvePoint>, Option<String>);

fn traced(scn: &Scenario, kind: HomotopyKind, cfg: &TraceConfig) -> Result<Traced, DiscretizationError> {
    let s_prev = match profile_before(scn, kind)? {
        Ok(s) => s,
        Err(msg) => return Ok((None, Vec::new(), Some(msg))),
    };
    let problem = scn.problem(kind, s_prev)?;
    let (points, error) = match trace(&problem, cfg) {
        Ok(points) => (points, None),
        Err(ContinuationError::Discretization(e)) => return Err(e),
        Err(e) => {
            let partial = match &e {
                ContinuationError::TraceFailure { partial, .. } => partial.clone(),
                _ => Vec::new(),
            };
            (partial, Some(e.to_string()))
        }
    };
    Ok((Some(problem), points, error))
}

/// Curve of the configured time step in the configured stepping mode.
pub fn run_trace(scn: &Scenario, kind: HomotopyKind) -> Result<TraceRun, DiscretizationError> {
    let (_, points, error) = traced(scn, kind, &scn.trace_config())?;
    Ok(TraceRun { kind, step_index: scn.trace.time_step_index, points, error })
}

#[derive(Debug, Clone)]
pub struct MetricsRun {
    pub kind: HomotopyKind,
    pub step_index: usize,
    pub s_tot: f64,
    pub records: Vec<MetricsRecord>,
    pub error: Option<String>,
}

impl MetricsRun {
    pub fn max_kappa(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.kappa).reduce(f64::max)
    }

    pub fn min_r_tilde(&self) -> Option<f64> {
        self.records.iter().map(|r| r.r_tilde).reduce(f64::min)
    }
}

/// Arclength-sampled trace of the configured step followed by the metric
/// sweep over its interior points.
pub fn run_metrics(scn: &Scenario, kind: HomotopyKind) -> Result<MetricsRun, DiscretizationError> {
    let cfg = TraceConfig { mode: StepMode::ArclengthStepping, ds: scn.metrics.ds, ..scn.trace_config() };
    let (problem, points, error) = traced(scn, kind, &cfg)?;
    let (s_tot, records) = match (&problem, &error) {
        (Some(problem), None) => {
            let sweep = sweep_metrics(problem, &points, &scn.metrics, &scn.solver);
            (sweep.s_tot, sweep.records)
        }
        _ => (points.last().map_or(0.0, |p| p.arclength), Vec::new()),
    };
    Ok(MetricsRun { kind, step_index: scn.trace.time_step_index, s_tot, records, error })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub kind: HomotopyKind,
    pub success: bool,
    pub pc_steps: usize,
    pub newton_iters: usize,
    pub s_tot: Option<f64>,
    pub max_kappa: Option<f64>,
    pub min_r_tilde: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub runs: Vec<SolveRun>,
}

/// Full marches with each kind plus curve metrics for the continuation
/// kinds; failures are flagged per row.
pub fn compare_homotopies(scn: &Scenario, kinds: &[HomotopyKind]) -> Result<Comparison, DiscretizationError> {
    let mut rows = Vec::with_capacity(kinds.len());
    let mut runs = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let run = run_solve(scn, kind)?;
        let mut row = CompareRow {
            kind,
            success: run.success(),
            pc_steps: run.steps.iter().map(|s| s.outcome.pc_steps).sum(),
            newton_iters: run.steps.iter().map(|s| s.outcome.newton_iters).sum(),
            s_tot: None,
            max_kappa: None,
            min_r_tilde: None,
            note: run
                .steps
                .iter()
                .find(|s| !s.outcome.success)
                .map_or(String::new(), |s| format!("step {} {}", s.step_index, s.outcome.verdict)),
        };
        if kind != HomotopyKind::TargetOnly {
            let m = run_metrics(scn, kind)?;
            if m.error.is_none() {
                row.s_tot = Some(m.s_tot);
                row.max_kappa = m.max_kappa();
                row.min_r_tilde = m.min_r_tilde();
            }
        }
        rows.push(row);
        runs.push(run);
    }
    Ok(Comparison { rows, runs })
}

// ---- CSV rendering ----

/// Plain decimal in a moderate range, exponent notation outside it.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e6).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn header(scn: &Scenario, command: &str, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    writeln!(out, "# tool: {TOOL_VERSION}").unwrap();
    writeln!(out, "# command: {command}").unwrap();
    for (k, v) in extra {
        writeln!(out, "# {k}: {v}").unwrap();
    }
    writeln!(out, "# resolved scenario:").unwrap();
    for line in scn.to_toml().lines() {
        writeln!(out, "#   {line}").unwrap();
    }
    out
}

fn profile_columns(out: &mut String, n: usize) {
    for k in 1..=n {
        write!(out, ",S_{k}").unwrap();
    }
    out.push('\n');
}

fn push_profile(out: &mut String, x: &[f64]) {
    for v in x {
        write!(out, ",{}", fmt_f64(*v)).unwrap();
    }
    out.push('\n');
}

pub fn solve_csv(scn: &Scenario, run: &SolveRun) -> String {
    let mut out = header(
        scn,
        "solve",
        &[("homotopy", run.kind.as_str().into()), ("cfl", fmt_f64(run.cfl)), ("success", run.success().to_string())],
    );
    out.push_str("step_index,time,verdict,pc_steps,newton_iters,cfl");
    profile_columns(&mut out, scn.grid.n_cells);
    for s in &run.steps {
        let o = &s.outcome;
        write!(
            out,
            "{},{},{},{},{},{}",
            s.step_index,
            fmt_f64(s.time),
            o.verdict,
            o.pc_steps,
            o.newton_iters,
            fmt_f64(run.cfl)
        )
        .unwrap();
        push_profile(&mut out, &o.profile);
    }
    out
}

pub fn trace_csv(scn: &Scenario, run: &TraceRun) -> String {
    let mut extra = vec![("homotopy", run.kind.as_str().to_string())];
    if let Some(e) = &run.error {
        extra.push(("error", e.clone()));
    }
    let mut out = header(scn, "trace", &extra);
    out.push_str("step_index,s,lambda,corrector_iters");
    profile_columns(&mut out, scn.grid.n_cells);
    for p in &run.points {
        write!(out, "{},{},{},{}", run.step_index, fmt_f64(p.arclength), fmt_f64(p.lambda), p.corrector_iters).unwrap();
        push_profile(&mut out, &p.x);
    }
    out
}

pub fn metrics_csv(scn: &Scenario, run: &MetricsRun) -> String {
    let mut extra = vec![
        ("homotopy", run.kind.as_str().to_string()),
        ("step_index", run.step_index.to_string()),
        ("s_tot", fmt_f64(run.s_tot)),
    ];
    if let Some(e) = &run.error {
        extra.push(("error", e.clone()));
    }
    let mut out = header(scn, "metrics", &extra);
    out.push_str("s,lambda,kappa,r,r_tilde,gamma_max,err_scale\n");
    for r in &run.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.s),
            fmt_f64(r.lambda),
            fmt_opt(r.kappa),
            fmt_f64(r.r),
            fmt_f64(r.r_tilde),
            fmt_f64(r.gamma_max),
            fmt_opt(r.err_scale)
        )
        .unwrap();
    }
    out
}

pub fn compare_csv(scn: &Scenario, cmp: &Comparison) -> String {
    let mut out = header(scn, "compare", &[]);
    out.push_str("kind,success,pc_steps,newton_iters,s_tot,max_kappa,min_r_tilde,note\n");
    for r in &cmp.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.kind.as_str(),
            r.success,
            r.pc_steps,
            r.newton_iters,
            fmt_opt(r.s_tot),
            fmt_opt(r.max_kappa),
            fmt_opt(r.min_r_tilde),
            r.note
        )
        .unwrap();
    }
    out
}
