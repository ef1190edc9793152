//! Implicit-Euler / upstream-weighted finite-volume residuals for one time
//! step, and the homotopy operators built from them.
//!
//! Cells are indexed `0..n`; the inflow ghost value is the boundary
//! saturation, the outflow ghost (diffusion stencil only) copies the last
//! cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{
    build_hull, max_abs_slope, CoreyFlux, FluxModel, FractionalFlow, PhysicsError, DEFAULT_HULL_SAMPLES, DOMAIN_TOL,
};
use crate::solver::Tridiagonal;

/// Tolerance on the continuation parameter range.
pub const LAMBDA_TOL: f64 = 1e-12;

/// Default scale factor in the artificial-diffusion calibration.
pub const DEFAULT_OMEGA: f64 = 2e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error("dimension mismatch: expected {expected} cells, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("continuation parameter {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("invalid {0}")]
    Invalid(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// Sign convention of the convective flux difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxSign {
    /// `(f(S_{k-1}) - f(S_k)) / dx`, literally.
    AsPrinted,
    /// `(f(S_k) - f(S_{k-1})) / dx`, which transports mass left to right.
    #[default]
    UpwindStandard,
}

impl FluxSign {
    fn factor(self) -> f64 {
        match self {
            Self::AsPrinted => -1.0,
            Self::UpwindStandard => 1.0,
        }
    }
}

/// Prefactor of the artificial diffusion stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionScaling {
    /// `beta * tau / dx`
    #[default]
    AsPrinted,
    /// `beta * tau / dx^2`
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomotopyKind {
    TargetOnly,
    VanishingDiffusion,
    LinearRelperm,
    Hull,
}

impl HomotopyKind {
    pub const ALL: [Self; 4] = [Self::TargetOnly, Self::VanishingDiffusion, Self::LinearRelperm, Self::Hull];
    pub const CONTINUATION: [Self; 3] = [Self::VanishingDiffusion, Self::LinearRelperm, Self::Hull];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TargetOnly => "target_only",
            Self::VanishingDiffusion => "vanishing_diffusion",
            Self::LinearRelperm => "linear_relperm",
            Self::Hull => "hull",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Kinds of the form `lambda G + (1 - lambda) F`.
    pub fn is_convex_combination(self) -> bool {
        matches!(self, Self::LinearRelperm | Self::Hull)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n_cells: usize,
    pub dx: f64,
    pub length: f64,
}

impl Grid {
    pub fn new(n_cells: usize, length: f64) -> Result<Self, DiscretizationError> {
        if n_cells == 0 {
            return Err(DiscretizationError::Invalid("grid: n_cells must be >= 1".into()));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(DiscretizationError::Invalid(format!("grid: length {length} must be > 0")));
        }
        Ok(Self { n_cells, dx: length / n_cells as f64, length })
    }

    /// Cell-center coordinates.
    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|k| (k as f64 + 0.5) * self.dx).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeStep {
    pub tau: f64,
    pub s_prev: Vec<f64>,
    pub s_inflow: f64,
}

impl TimeStep {
    pub fn new(tau: f64, s_prev: Vec<f64>, s_inflow: f64) -> Result<Self, DiscretizationError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(DiscretizationError::Invalid(format!("time step tau = {tau} must be > 0")));
        }
        // converged Newton iterates may undershoot 0 or overshoot 1 by roundoff
        let unit = -DOMAIN_TOL..=1.0 + DOMAIN_TOL;
        if let Some(bad) = s_prev.iter().find(|s| !unit.contains(*s)) {
            return Err(DiscretizationError::Invalid(format!("previous saturation {bad} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&s_inflow) {
            return Err(DiscretizationError::Invalid(format!("inflow saturation {s_inflow} outside [0, 1]")));
        }
        Ok(Self { tau, s_prev, s_inflow })
    }
}

/// Scheme conventions shared by every residual of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scheme {
    pub flux_sign: FluxSign,
    pub diffusion_scaling: DiffusionScaling,
}

fn check_len(grid: &Grid, x: &[f64]) -> Result<(), DiscretizationError> {
    if x.len() != grid.n_cells {
        return Err(DiscretizationError::DimensionMismatch { expected: grid.n_cells, got: x.len() });
    }
    Ok(())
}

/// Accumulation plus upstream-weighted convection for the flux `flux`.
pub fn residual_target<F: FractionalFlow + ?Sized>(
    grid: &Grid,
    step: &TimeStep,
    flux: &F,
    sign: FluxSign,
    x: &[f64],
) -> Result<Vec<f64>, DiscretizationError> {
    check_len(grid, x)?;
    check_len(grid, &step.s_prev)?;
    let sigma = sign.factor();
    let mut f_up = flux.eval_extended(step.s_inflow)?.0;
    let mut out = Vec::with_capacity(x.len());
    for (k, &xk) in x.iter().enumerate() {
        let fk = flux.eval_extended(xk)?.0;
        out.push((xk - step.s_prev[k]) / step.tau + sigma * (fk - f_up) / grid.dx);
        f_up = fk;
    }
    Ok(out)
}

/// Lower-bidiagonal Jacobian of [`residual_target`].
pub fn jacobian_target<F: FractionalFlow + ?Sized>(
    grid: &Grid,
    step: &TimeStep,
    flux: &F,
    sign: FluxSign,
    x: &[f64],
) -> Result<Tridiagonal, DiscretizationError> {
    check_len(grid, x)?;
    let sigma = sign.factor();
    let mut jac = Tridiagonal::zeros(x.len());
    for (k, &xk) in x.iter().enumerate() {
        let dk = flux.eval_extended(xk)?.1;
        jac.diag[k] = 1.0 / step.tau + sigma * dk / grid.dx;
        if k + 1 < x.len() {
            jac.sub[k] = -sigma * dk / grid.dx;
        }
    }
    Ok(jac)
}

/// Coefficient multiplying `(S_{k-1} - 2 S_k + S_{k+1})` in the diffusion
/// residual. Its sign follows the flux convention: verbatim for `AsPrinted`,
/// negated for `UpwindStandard` so the term is dissipative there.
pub fn diffusion_coefficient(grid: &Grid, step: &TimeStep, beta: f64, scheme: Scheme) -> f64 {
    let scale = match scheme.diffusion_scaling {
        DiffusionScaling::AsPrinted => step.tau / grid.dx,
        DiffusionScaling::Laplacian => step.tau / (grid.dx * grid.dx),
    };
    -scheme.flux_sign.factor() * beta * scale
}

/// Artificial diffusion stencil with inflow Dirichlet and zero-gradient
/// outflow ghosts.
pub fn residual_diffusion(
    grid: &Grid,
    step: &TimeStep,
    beta: f64,
    scheme: Scheme,
    x: &[f64],
) -> Result<Vec<f64>, DiscretizationError> {
    check_len(grid, x)?;
    let c = diffusion_coefficient(grid, step, beta, scheme);
    let n = x.len();
    Ok((0..n)
        .map(|k| {
            let left = if k == 0 { step.s_inflow } else { x[k - 1] };
            let right = if k + 1 == n { x[k] } else { x[k + 1] };
            c * (left - 2.0 * x[k] + right)
        })
        .collect())
}

pub fn jacobian_diffusion(grid: &Grid, step: &TimeStep, beta: f64, scheme: Scheme) -> Tridiagonal {
    let c = diffusion_coefficient(grid, step, beta, scheme);
    let n = grid.n_cells;
    let mut jac = Tridiagonal::zeros(n);
    for k in 0..n {
        jac.diag[k] = if k + 1 == n { -c } else { -2.0 * c };
        if k + 1 < n {
            jac.sub[k] = c;
            jac.sup[k] = c;
        }
    }
    jac
}

/// `omega * max |f'|` over `[0, 1]`.
pub fn calibrate_beta<F: FractionalFlow + ?Sized>(flux: &F, omega: f64) -> f64 {
    debug_assert!(omega > 0.0);
    omega * max_abs_slope(flux)
}

/// A parametrized square system `H(X; lambda) = 0` with a tridiagonal
/// Jacobian in `X`.
pub trait Homotopy {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64], lambda: f64) -> Result<Vec<f64>, DiscretizationError>;
    fn jac_x(&self, x: &[f64], lambda: f64) -> Result<Tridiagonal, DiscretizationError>;
    fn jac_lambda(&self, x: &[f64], lambda: f64) -> Result<Vec<f64>, DiscretizationError>;

    fn check_args(&self, x: &[f64], lambda: f64) -> Result<(), DiscretizationError> {
        if x.len() != self.dim() {
            return Err(DiscretizationError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if !(-LAMBDA_TOL..=1.0 + LAMBDA_TOL).contains(&lambda) {
            return Err(DiscretizationError::LambdaOutOfRange(lambda));
        }
        Ok(())
    }
}

/// Settings needed to construct the auxiliary half of a homotopy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxiliarySettings {
    pub omega: f64,
    /// Resident saturation; with the inflow value it fixes the wave
    /// direction and hence the hull orientation.
    pub s_resident: f64,
    pub hull_samples: usize,
}

impl Default for AuxiliarySettings {
    fn default() -> Self {
        Self { omega: DEFAULT_OMEGA, s_resident: 0.0, hull_samples: DEFAULT_HULL_SAMPLES }
    }
}

/// One implicit time step embedded in a homotopy.
#[derive(Debug, Clone, PartialEq)]
pub struct HomotopyProblem {
    pub kind: HomotopyKind,
    pub flux_target: CoreyFlux,
    pub flux_aux: Option<FluxModel>,
    pub beta: f64,
    pub grid: Grid,
    pub step: TimeStep,
    pub scheme: Scheme,
}

impl HomotopyProblem {
    pub fn new(
        kind: HomotopyKind,
        flux_target: CoreyFlux,
        grid: Grid,
        step: TimeStep,
        scheme: Scheme,
        aux: &AuxiliarySettings,
    ) -> Result<Self, DiscretizationError> {
        check_len(&grid, &step.s_prev)?;
        flux_target.validate()?;
        let (flux_aux, beta) = match kind {
            HomotopyKind::TargetOnly => (None, 0.0),
            HomotopyKind::VanishingDiffusion => {
                if !(aux.omega > 0.0) {
                    return Err(DiscretizationError::Invalid(format!("omega = {} must be > 0", aux.omega)));
                }
                (None, calibrate_beta(&flux_target, aux.omega))
            }
            HomotopyKind::LinearRelperm => (Some(FluxModel::Corey(flux_target.linearized())), 0.0),
            HomotopyKind::Hull => {
                let hull = build_hull(&flux_target, step.s_inflow, aux.s_resident, aux.hull_samples)?;
                (Some(FluxModel::Hull(hull)), 0.0)
            }
        };
        Ok(Self { kind, flux_target, flux_aux, beta, grid, step, scheme })
    }

    /// Same problem with an explicit diffusion coefficient.
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn target_residual(&self, x: &[f64]) -> Result<Vec<f64>, DiscretizationError> {
        residual_target(&self.grid, &self.step, &self.flux_target, self.scheme.flux_sign, x)
    }

    /// The auxiliary residual `G`, or `None` for kinds that are not convex
    /// combinations.
    pub fn auxiliary_residual(&self, x: &[f64]) -> Option<Result<Vec<f64>, DiscretizationError>> {
        self.flux_aux.as_ref().map(|aux| residual_target(&self.grid, &self.step, aux, self.scheme.flux_sign, x))
    }

    pub fn diffusion_residual(&self, x: &[f64]) -> Result<Vec<f64>, DiscretizationError> {
        residual_diffusion(&self.grid, &self.step, self.beta, self.scheme, x)
    }

    /// Largest wave speed relative to one cell per step: `tau max|f'| / dx`.
    pub fn cfl(&self) -> f64 {
        self.step.tau * max_abs_slope(&self.flux_target) / self.grid.dx
    }

    fn aux_flux(&self) -> &FluxModel {
        self.flux_aux.as_ref().expect("convex-combination kinds carry an auxiliary flux")
    }
}

impl Homotopy for HomotopyProblem {
    fn dim(&self) -> usize {
        self.grid.n_cells
    }

    fn residual(&self, x: &[f64], lambda: f64) -> Result<Vec<f64>, DiscretizationError> {
        self.check_args(x, lambda)?;
        let f = self.target_residual(x)?;
        Ok(match self.kind {
            HomotopyKind::TargetOnly => f,
            HomotopyKind::VanishingDiffusion => {
                let d = self.diffusion_residual(x)?;
                f.iter().zip(&d).map(|(fk, dk)| fk + lambda * dk).collect()
            }
            HomotopyKind::LinearRelperm | HomotopyKind::Hull => {
                let g = residual_target(&self.grid, &self.step, self.aux_flux(), self.scheme.flux_sign, x)?;
                g.iter().zip(&f).map(|(gk, fk)| lambda * gk + (1.0 - lambda) * fk).collect()
            }
        })
    }

    fn jac_x(&self, x: &[f64], lambda: f64) -> Result<Tridiagonal, DiscretizationError> {
        self.check_args(x, lambda)?;
        let jf = jacobian_target(&self.grid, &self.step, &self.flux_target, self.scheme.flux_sign, x)?;
        Ok(match self.kind {
            HomotopyKind::TargetOnly => jf,
            HomotopyKind::VanishingDiffusion => {
                jf.combine(1.0, &jacobian_diffusion(&self.grid, &self.step, self.beta, self.scheme), lambda)
            }
            HomotopyKind::LinearRelperm | HomotopyKind::Hull => {
                let jg = jacobian_target(&self.grid, &self.step, self.aux_flux(), self.scheme.flux_sign, x)?;
                jg.combine(lambda, &jf, 1.0 - lambda)
            }
        })
    }

    fn jac_lambda(&self, x: &[f64], lambda: f64) -> Result<Vec<f64>, DiscretizationError> {
        self.check_args(x, lambda)?;
        Ok(match self.kind {
            HomotopyKind::TargetOnly => vec![0.0; x.len()],
            HomotopyKind::VanishingDiffusion => self.diffusion_residual(x)?,
            HomotopyKind::LinearRelperm | HomotopyKind::Hull => {
                let f = self.target_residual(x)?;
                let g = residual_target(&self.grid, &self.step, self.aux_flux(), self.scheme.flux_sign, x)?;
                g.iter().zip(&f).map(|(gk, fk)| gk - fk).collect()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear() -> CoreyFlux {
        CoreyFlux::new(1.0, 1.0, 1.0).unwrap()
    }

    fn printed() -> Scheme {
        Scheme { flux_sign: FluxSign::AsPrinted, diffusion_scaling: DiffusionScaling::AsPrinted }
    }

    #[test]
    fn single_cell_residual_as_printed() {
        let grid = Grid::new(1, 1.0).unwrap();
        let step = TimeStep::new(1.0, vec![0.0], 1.0).unwrap();
        let r = residual_target(&grid, &step, &linear(), FluxSign::AsPrinted, &[0.5]).unwrap();
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn two_cell_residual_as_printed() {
        // k=1: 0.5 + (1 - 0.5) = 1; k=2: 0.25 + (0.5 - 0.25) = 0.5
        let grid = Grid::new(2, 2.0).unwrap();
        let step = TimeStep::new(1.0, vec![0.0, 0.0], 1.0).unwrap();
        let r = residual_target(&grid, &step, &linear(), FluxSign::AsPrinted, &[0.5, 0.25]).unwrap();
        assert_eq!(r, vec![1.0, 0.5]);
        let r = residual_target(&grid, &step, &linear(), FluxSign::UpwindStandard, &[0.5, 0.25]).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn uniform_state_is_steady() {
        let f = CoreyFlux::new(2.0, 3.0, 0.5).unwrap();
        let grid = Grid::new(5, 1.0).unwrap();
        let step = TimeStep::new(0.1, vec![0.3; 5], 0.3).unwrap();
        for sign in [FluxSign::AsPrinted, FluxSign::UpwindStandard] {
            let r = residual_target(&grid, &step, &f, sign, &[0.3; 5]).unwrap();
            assert!(r.iter().all(|v| *v == 0.0));
        }
        let d = residual_diffusion(&grid, &step, 0.7, Scheme::default(), &[0.3; 5]).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_jacobian_as_printed() {
        let grid = Grid::new(4, 4.0).unwrap();
        let step = TimeStep::new(1.0, vec![0.0; 4], 1.0).unwrap();
        let j = jacobian_target(&grid, &step, &linear(), FluxSign::AsPrinted, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(j.diag, vec![0.0; 4]);
        assert_eq!(j.sub, vec![1.0; 3]);
        assert_eq!(j.sup, vec![0.0; 3]);

        let grid = Grid::new(1, 0.5).unwrap();
        let step = TimeStep::new(0.2, vec![0.0], 1.0).unwrap();
        let f = CoreyFlux::new(2.0, 2.0, 1.0).unwrap();
        let j = jacobian_target(&grid, &step, &f, FluxSign::AsPrinted, &[0.5]).unwrap();
        assert_eq!(j.diag, vec![1.0 / 0.2 - 2.0 / 0.5]);
    }

    #[test]
    fn diffusion_stencil_example() {
        let grid = Grid::new(3, 3.0).unwrap();
        let step = TimeStep::new(1.0, vec![0.0; 3], 1.0).unwrap();
        let d = residual_diffusion(&grid, &step, 1.0, printed(), &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(d, vec![-1.0, 1.0, 0.0]);
        // standard sign flips the stencil so that it dissipates
        let d = residual_diffusion(&grid, &step, 1.0, Scheme::default(), &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(d, vec![1.0, -1.0, -0.0]);
    }

    #[test]
    fn diffusion_sum_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = Grid::new(17, 1.0).unwrap();
        let step = TimeStep::new(0.03, vec![0.0; 17], 0.8).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..17).map(|_| rng.gen_range(0.0..1.0)).collect();
            let beta = rng.gen_range(0.01..1.0);
            let d = residual_diffusion(&grid, &step, beta, printed(), &x).unwrap();
            let sum: f64 = d.iter().sum();
            let ghost_right = x[16];
            let expected = beta * step.tau / grid.dx * (step.s_inflow - x[0] - x[16] + ghost_right);
            assert!((sum - expected).abs() < 1e-12, "{sum} vs {expected}");
        }
    }

    #[test]
    fn laplacian_scaling_divides_by_dx_again() {
        let grid = Grid::new(10, 1.0).unwrap();
        let step = TimeStep::new(0.05, vec![0.0; 10], 1.0).unwrap();
        let a = diffusion_coefficient(&grid, &step, 0.004, printed());
        let b = diffusion_coefficient(
            &grid,
            &step,
            0.004,
            Scheme { diffusion_scaling: DiffusionScaling::Laplacian, ..printed() },
        );
        assert_relative_eq!(b, a / grid.dx, max_relative = 1e-15);
    }

    #[test]
    fn beta_calibration() {
        assert_relative_eq!(calibrate_beta(&linear(), 2e-3), 2e-3, max_relative = 1e-14);
        let f = CoreyFlux::new(2.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(calibrate_beta(&f, DEFAULT_OMEGA), 4e-3, max_relative = 1e-12);
    }

    #[test]
    fn dimension_and_lambda_errors() {
        let grid = Grid::new(3, 1.0).unwrap();
        let step = TimeStep::new(0.1, vec![0.0; 3], 1.0).unwrap();
        assert!(matches!(
            residual_target(&grid, &step, &linear(), FluxSign::UpwindStandard, &[0.0; 2]),
            Err(DiscretizationError::DimensionMismatch { expected: 3, got: 2 })
        ));
        let p = HomotopyProblem::new(
            HomotopyKind::LinearRelperm,
            linear(),
            grid,
            step,
            Scheme::default(),
            &AuxiliarySettings::default(),
        )
        .unwrap();
        assert!(matches!(p.residual(&[0.0; 3], 1.5), Err(DiscretizationError::LambdaOutOfRange(_))));
        assert!(p.residual(&[0.0; 3], 1.0 + 1e-13).is_ok());
    }

    #[test]
    fn hull_kind_with_equal_states_fails() {
        let grid = Grid::new(3, 1.0).unwrap();
        let step = TimeStep::new(0.1, vec![0.5; 3], 0.5).unwrap();
        let aux = AuxiliarySettings { s_resident: 0.5, ..Default::default() };
        let err = HomotopyProblem::new(HomotopyKind::Hull, linear(), grid, step, Scheme::default(), &aux);
        assert!(matches!(err, Err(DiscretizationError::Physics(PhysicsError::DegenerateStates(_)))));
    }

    #[test]
    fn grid_and_step_validation() {
        assert!(Grid::new(0, 1.0).is_err());
        assert!(Grid::new(4, -1.0).is_err());
        let g = Grid::new(8, 2.0).unwrap();
        assert_eq!(g.dx, 0.25);
        assert!((g.n_cells as f64 * g.dx - g.length).abs() <= 1e-12 * g.length);
        assert!(TimeStep::new(0.0, vec![0.0], 1.0).is_err());
        assert!(TimeStep::new(0.1, vec![1.2], 1.0).is_err());
    }
}
