//! Fractional flow functions for two-phase displacement.
//!
//! The Corey fraction `f(S) = S^n_w / (S^n_w + M (1-S)^n_n)` is the target
//! constitutive law. Two derived laws serve as auxiliary problems: the
//! linear-relative-permeability variant (`n_w = n_n = 1`) and the
//! concave/convex envelope of `f` (see [`hull`]).

mod hull;

pub use hull::{build_hull, envelope_pieces, HullFlux, HullOrientation, HullPiece};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for accepting saturations marginally outside `[0, 1]`.
pub const DOMAIN_TOL: f64 = 1e-12;

/// Lower edge of the band in which the C¹ linear extension is evaluated.
pub const EXTENSION_LO: f64 = -0.1;
/// Upper edge of the extension band.
pub const EXTENSION_HI: f64 = 1.1;

/// Default number of uniform samples used by the hull builder.
pub const DEFAULT_HULL_SAMPLES: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("saturation {0} outside [0, 1]")]
    Domain(f64),
    #[error("saturation {0} escaped the extended evaluation band [{EXTENSION_LO}, {EXTENSION_HI}]")]
    ExtensionEscape(f64),
    #[error("degenerate state pair: left and right saturation both equal {0}")]
    DegenerateStates(f64),
    #[error("invalid flux parameter: {0}")]
    InvalidParameter(String),
    #[error("hull construction needs at least 64 samples, got {0}")]
    TooFewSamples(usize),
}

/// A fractional flow law on the unit saturation interval.
///
/// Implementors provide the raw function and its first two derivatives on
/// `[0, 1]`; the checked and extended evaluators are derived from those.
pub trait FractionalFlow {
    fn raw(&self, s: f64) -> f64;
    fn raw_d1(&self, s: f64) -> f64;
    fn raw_d2(&self, s: f64) -> f64;

    fn eval(&self, s: f64) -> Result<f64, PhysicsError> {
        Ok(self.raw(check_unit(s)?))
    }

    fn eval_d1(&self, s: f64) -> Result<f64, PhysicsError> {
        Ok(self.raw_d1(check_unit(s)?))
    }

    fn eval_d2(&self, s: f64) -> Result<f64, PhysicsError> {
        Ok(self.raw_d2(check_unit(s)?))
    }

    /// Value and slope, extended linearly (C¹) beyond `[0, 1]` up to the
    /// edges of the extension band. Iterates outside the band are errors.
    fn eval_extended(&self, s: f64) -> Result<(f64, f64), PhysicsError> {
        if !(EXTENSION_LO..=EXTENSION_HI).contains(&s) {
            return Err(PhysicsError::ExtensionEscape(s));
        }
        Ok(if s < 0.0 {
            let slope = self.raw_d1(0.0);
            (self.raw(0.0) + slope * s, slope)
        } else if s > 1.0 {
            let slope = self.raw_d1(1.0);
            (self.raw(1.0) + slope * (s - 1.0), slope)
        } else {
            (self.raw(s), self.raw_d1(s))
        })
    }
}

fn check_unit(s: f64) -> Result<f64, PhysicsError> {
    if (-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&s) {
        Ok(s.clamp(0.0, 1.0))
    } else {
        Err(PhysicsError::Domain(s))
    }
}

/// Corey fractional flow with exponents `n_w`, `n_n` and viscosity ratio
/// `M = mu_w / mu_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreyFlux {
    pub n_w: f64,
    pub n_n: f64,
    #[serde(rename = "viscosity_ratio")]
    pub m: f64,
}

impl CoreyFlux {
    pub fn new(n_w: f64, n_n: f64, m: f64) -> Result<Self, PhysicsError> {
        let flux = Self { n_w, n_n, m };
        flux.validate()?;
        Ok(flux)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !(self.n_w >= 1.0 && self.n_w.is_finite()) {
            return Err(PhysicsError::InvalidParameter(format!("n_w = {} must be >= 1", self.n_w)));
        }
        if !(self.n_n >= 1.0 && self.n_n.is_finite()) {
            return Err(PhysicsError::InvalidParameter(format!("n_n = {} must be >= 1", self.n_n)));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(PhysicsError::InvalidParameter(format!("viscosity_ratio = {} must be > 0", self.m)));
        }
        Ok(())
    }

    /// Same viscosity ratio with linear relative permeabilities.
    pub fn linearized(&self) -> Self {
        Self { n_w: 1.0, n_n: 1.0, m: self.m }
    }

    // (a, a', a'') for a = S^n_w and (b, b', b'') for b = M (1-S)^n_n
    fn parts(&self, s: f64) -> ([f64; 3], [f64; 3]) {
        let w = 1.0 - s;
        let a = [pow_deriv(s, self.n_w, 0), pow_deriv(s, self.n_w, 1), pow_deriv(s, self.n_w, 2)];
        let b = [
            self.m * pow_deriv(w, self.n_n, 0),
            -self.m * pow_deriv(w, self.n_n, 1),
            self.m * pow_deriv(w, self.n_n, 2),
        ];
        (a, b)
    }
}

/// k-th derivative of x^n, with vanishing coefficients short-circuited so
/// that e.g. the second derivative of x^1 at 0 is 0 rather than NaN.
fn pow_deriv(x: f64, n: f64, k: u32) -> f64 {
    let mut coeff = 1.0;
    for i in 0..k {
        coeff *= n - f64::from(i);
    }
    if coeff == 0.0 {
        return 0.0;
    }
    let e = n - f64::from(k);
    let p = if e.fract() == 0.0 && e.abs() < 64.0 { x.powi(e as i32) } else { x.powf(e) };
    coeff * p
}

impl FractionalFlow for CoreyFlux {
    fn raw(&self, s: f64) -> f64 {
        let a = pow_deriv(s, self.n_w, 0);
        let b = self.m * pow_deriv(1.0 - s, self.n_n, 0);
        a / (a + b)
    }

    fn raw_d1(&self, s: f64) -> f64 {
        let (a, b) = self.parts(s);
        let den = a[0] + b[0];
        (a[1] * b[0] - a[0] * b[1]) / (den * den)
    }

    fn raw_d2(&self, s: f64) -> f64 {
        let (a, b) = self.parts(s);
        let den = a[0] + b[0];
        let num = a[1] * b[0] - a[0] * b[1];
        (a[2] * b[0] - a[0] * b[2]) / (den * den) - 2.0 * num * (a[1] + b[1]) / (den * den * den)
    }
}

/// Free-function form of [`FractionalFlow::eval`] for a Corey flux.
pub fn eval_corey(flux: &CoreyFlux, s: f64) -> Result<f64, PhysicsError> {
    flux.eval(s)
}

pub fn eval_corey_d1(flux: &CoreyFlux, s: f64) -> Result<f64, PhysicsError> {
    flux.eval_d1(s)
}

pub fn eval_corey_d2(flux: &CoreyFlux, s: f64) -> Result<f64, PhysicsError> {
    flux.eval_d2(s)
}

pub fn linearized_flux(flux: &CoreyFlux) -> CoreyFlux {
    flux.linearized()
}

/// Any flux law used by a homotopy problem.
#[derive(Debug, Clone, PartialEq)]
pub enum FluxModel {
    Corey(CoreyFlux),
    Hull(HullFlux<CoreyFlux>),
}

impl FractionalFlow for FluxModel {
    fn raw(&self, s: f64) -> f64 {
        match self {
            Self::Corey(c) => c.raw(s),
            Self::Hull(h) => h.raw(s),
        }
    }

    fn raw_d1(&self, s: f64) -> f64 {
        match self {
            Self::Corey(c) => c.raw_d1(s),
            Self::Hull(h) => h.raw_d1(s),
        }
    }

    fn raw_d2(&self, s: f64) -> f64 {
        match self {
            Self::Corey(c) => c.raw_d2(s),
            Self::Hull(h) => h.raw_d2(s),
        }
    }
}

/// Maximum of `|f'|` on `[0, 1]`: a uniform scan followed by golden-section
/// refinement around the best scan point.
pub fn max_abs_slope<F: FractionalFlow + ?Sized>(flux: &F) -> f64 {
    const SCAN: usize = 1024;
    let g = |s: f64| flux.raw_d1(s).abs();
    let h = 1.0 / SCAN as f64;
    let (best_j, best) =
        (0..=SCAN)
            .map(|j| (j, g(j as f64 * h)))
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });

    let mut lo = (best_j as f64 - 1.0).max(0.0) * h;
    let mut hi = (best_j as f64 + 1.0).min(SCAN as f64) * h;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut g1, mut g2) = (g(x1), g(x2));
    while hi - lo > 1e-12 {
        if g1 < g2 {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + ratio * (hi - lo);
            g2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - ratio * (hi - lo);
            g1 = g(x1);
        }
    }
    best.max(g(0.5 * (lo + hi))).max(g1).max(g2)
}
