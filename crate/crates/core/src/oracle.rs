//! Entropy solution of the Riemann problem for a scalar conservation law
//! `S_t + f(S)_x = 0` with a monotone flux, via the concave/convex envelope
//! between the two states (Welge construction).

use crate::physics::{envelope_pieces, FractionalFlow, HullOrientation, HullPiece, PhysicsError, DEFAULT_HULL_SAMPLES};

const INVERSION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Wave {
    /// Discontinuity travelling at the chord slope between its states.
    Shock { speed: f64, left: f64, right: f64 },
    /// Continuous fan with characteristic speeds `f'(S)`.
    Rarefaction { s_from: f64, s_to: f64, speed_from: f64, speed_to: f64 },
}

impl Wave {
    pub fn speeds(&self) -> (f64, f64) {
        match *self {
            Self::Shock { speed, .. } => (speed, speed),
            Self::Rarefaction { speed_from, speed_to, .. } => (speed_from, speed_to),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiemannSolution<F> {
    pub flux: F,
    pub s_left: f64,
    pub s_right: f64,
    /// Waves ordered left to right, speeds nondecreasing.
    pub waves: Vec<Wave>,
}

pub fn solve_riemann<F: FractionalFlow + Clone>(
    flux: &F,
    s_left: f64,
    s_right: f64,
) -> Result<RiemannSolution<F>, PhysicsError> {
    if s_left == s_right {
        return Err(PhysicsError::DegenerateStates(s_left));
    }
    let orientation = HullOrientation::for_states(s_left, s_right);
    let (lo, hi) = (s_left.min(s_right), s_left.max(s_right));
    let mut pieces = envelope_pieces(flux, lo, hi, orientation, DEFAULT_HULL_SAMPLES)?;
    // travel from the left state to the right state
    if s_left > s_right {
        pieces.reverse();
    }
    let descending = s_left > s_right;

    let mut waves: Vec<Wave> = Vec::with_capacity(pieces.len());
    for piece in pieces {
        let (a, b) = if descending { (piece.end(), piece.start()) } else { (piece.start(), piece.end()) };
        let wave = match piece {
            HullPiece::Linear { .. } => Wave::Shock { speed: piece.slope().expect("linear piece"), left: a, right: b },
            HullPiece::Base { .. } => {
                Wave::Rarefaction { s_from: a, s_to: b, speed_from: flux.raw_d1(a), speed_to: flux.raw_d1(b) }
            }
        };
        // adjoining shocks at one speed are a single discontinuity
        if let (Some(Wave::Shock { speed: s0, right, .. }), Wave::Shock { speed: s1, right: r1, .. }) =
            (waves.last_mut(), wave)
        {
            if (*s0 - s1).abs() <= 1e-12 * s1.abs().max(1.0) {
                *right = r1;
                continue;
            }
        }
        waves.push(wave);
    }
    Ok(RiemannSolution { flux: flux.clone(), s_left, s_right, waves })
}

impl<F: FractionalFlow> RiemannSolution<F> {
    /// Saturation at `(x, t)`, `t > 0`, for the self-similar profile.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let xi = x / t;
        for wave in &self.waves {
            match *wave {
                Wave::Shock { speed, left, .. } => {
                    if xi < speed {
                        return left;
                    }
                }
                Wave::Rarefaction { s_from, s_to, speed_from, speed_to } => {
                    if xi < speed_from {
                        return s_from;
                    }
                    if xi <= speed_to {
                        return self.invert_speed(xi, s_from, s_to);
                    }
                }
            }
        }
        self.s_right
    }

    /// Saturation inside a fan where `f'(S) = xi`.
    fn invert_speed(&self, xi: f64, s_from: f64, s_to: f64) -> f64 {
        // f' - xi changes sign from <= 0 at s_from to >= 0 at s_to
        let (mut a, mut b) = (s_from, s_to);
        while (b - a).abs() > INVERSION_TOL {
            let m = 0.5 * (a + b);
            if self.flux.raw_d1(m) < xi {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// All wave speeds in order, shocks contributing one entry and fans two.
    pub fn speeds(&self) -> Vec<f64> {
        self.waves
            .iter()
            .flat_map(|w| match *w {
                Wave::Shock { speed, .. } => vec![speed],
                Wave::Rarefaction { speed_from, speed_to, .. } => vec![speed_from, speed_to],
            })
            .collect()
    }
}

pub fn eval_solution<F: FractionalFlow>(sol: &RiemannSolution<F>, x: f64, t: f64) -> f64 {
    sol.eval(x, t)
}

/// Average of the exact solution over each cell of a uniform grid on
/// `[0, length]`.
pub fn cell_averages<F: FractionalFlow>(sol: &RiemannSolution<F>, n_cells: usize, length: f64, t: f64) -> Vec<f64> {
    const SUB: usize = 16;
    let dx = length / n_cells as f64;
    (0..n_cells)
        .map(|k| {
            let x0 = k as f64 * dx;
            (0..SUB).map(|j| sol.eval(x0 + (j as f64 + 0.5) * dx / SUB as f64, t)).sum::<f64>() / SUB as f64
        })
        .collect()
}
