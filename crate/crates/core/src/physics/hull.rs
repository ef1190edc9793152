//! Concave/convex envelopes of a fractional flow function.
//!
//! The envelope is built numerically: a monotone-chain hull of uniform
//! samples, after which every segment endpoint that borders a region where
//! the envelope follows the base function is moved onto the exact tangency
//! point by bisection.

use super::{FractionalFlow, PhysicsError};

const TANGENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullOrientation {
    /// Smallest concave majorant.
    ConcaveUpper,
    /// Largest convex minorant.
    ConvexLower,
}

impl HullOrientation {
    /// Orientation selected by the wave direction: an invading state above
    /// the resident state needs the upper concave envelope.
    pub fn for_states(s_left: f64, s_right: f64) -> Self {
        if s_left > s_right {
            Self::ConcaveUpper
        } else {
            Self::ConvexLower
        }
    }

    fn sign(self) -> f64 {
        match self {
            Self::ConcaveUpper => 1.0,
            Self::ConvexLower => -1.0,
        }
    }
}

/// One piece of a piecewise envelope, ordered by saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HullPiece {
    Linear { s0: f64, f0: f64, s1: f64, f1: f64 },
    Base { s0: f64, s1: f64 },
}

impl HullPiece {
    pub fn start(&self) -> f64 {
        match *self {
            Self::Linear { s0, .. } | Self::Base { s0, .. } => s0,
        }
    }

    pub fn end(&self) -> f64 {
        match *self {
            Self::Linear { s1, .. } | Self::Base { s1, .. } => s1,
        }
    }

    pub fn slope(&self) -> Option<f64> {
        match *self {
            Self::Linear { s0, f0, s1, f1 } => Some((f1 - f0) / (s1 - s0)),
            Self::Base { .. } => None,
        }
    }
}

/// Envelope of a base flux on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HullFlux<F> {
    pub base: F,
    pub orientation: HullOrientation,
    pieces: Vec<HullPiece>,
}

impl<F: FractionalFlow> HullFlux<F> {
    pub fn pieces(&self) -> &[HullPiece] {
        &self.pieces
    }

    /// `(S, f)` knots at every junction between pieces, endpoints included.
    pub fn breakpoints(&self) -> Vec<(f64, f64)> {
        let mut knots = Vec::with_capacity(self.pieces.len() + 1);
        for p in &self.pieces {
            knots.push((p.start(), self.raw(p.start())));
        }
        if let Some(last) = self.pieces.last() {
            knots.push((last.end(), self.raw(last.end())));
        }
        knots
    }

    fn piece_at(&self, s: f64) -> &HullPiece {
        let idx = self.pieces.partition_point(|p| p.start() <= s);
        &self.pieces[idx.saturating_sub(1)]
    }
}

impl<F: FractionalFlow> FractionalFlow for HullFlux<F> {
    fn raw(&self, s: f64) -> f64 {
        match *self.piece_at(s) {
            HullPiece::Linear { s0, f0, s1, f1 } => f0 + (f1 - f0) / (s1 - s0) * (s - s0),
            HullPiece::Base { .. } => self.base.raw(s),
        }
    }

    fn raw_d1(&self, s: f64) -> f64 {
        let piece = self.piece_at(s);
        match piece.slope() {
            Some(k) => k,
            None => self.base.raw_d1(s),
        }
    }

    fn raw_d2(&self, s: f64) -> f64 {
        match self.piece_at(s) {
            HullPiece::Linear { .. } => 0.0,
            HullPiece::Base { .. } => self.base.raw_d2(s),
        }
    }
}

/// Envelope of `flux` over `[0, 1]`, oriented by the wave direction from
/// `s_left` (inflow) to `s_right` (resident state).
pub fn build_hull<F: FractionalFlow + Clone>(
    flux: &F,
    s_left: f64,
    s_right: f64,
    n_samples: usize,
) -> Result<HullFlux<F>, PhysicsError> {
    for s in [s_left, s_right] {
        if !(0.0..=1.0).contains(&s) {
            return Err(PhysicsError::Domain(s));
        }
    }
    if s_left == s_right {
        return Err(PhysicsError::DegenerateStates(s_left));
    }
    let orientation = HullOrientation::for_states(s_left, s_right);
    let pieces = envelope_pieces(flux, 0.0, 1.0, orientation, n_samples)?;
    Ok(HullFlux { base: flux.clone(), orientation, pieces })
}

/// Piecewise description of the envelope of `flux` restricted to `[lo, hi]`.
pub fn envelope_pieces<F: FractionalFlow + ?Sized>(
    flux: &F,
    lo: f64,
    hi: f64,
    orientation: HullOrientation,
    n_samples: usize,
) -> Result<Vec<HullPiece>, PhysicsError> {
    if n_samples < 64 {
        return Err(PhysicsError::TooFewSamples(n_samples));
    }
    if hi <= lo {
        return Err(PhysicsError::DegenerateStates(lo));
    }
    let sign = orientation.sign();
    let g = |s: f64| sign * flux.raw(s);
    let dg = |s: f64| sign * flux.raw_d1(s);

    let xs = sample_points(lo, hi, n_samples);
    let ys: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let last = xs.len() - 1;

    // Upper monotone chain; near-collinear points are dropped so that an
    // already-linear stretch collapses to a single segment.
    let mut chain: Vec<usize> = Vec::with_capacity(xs.len());
    for j in 0..xs.len() {
        while chain.len() >= 2 {
            let o = chain[chain.len() - 2];
            let a = chain[chain.len() - 1];
            let (p, q) = ((xs[a] - xs[o]) * (ys[j] - ys[o]), (ys[a] - ys[o]) * (xs[j] - xs[o]));
            if p - q >= -1e-10 * (p.abs() + q.abs()) {
                chain.pop();
            } else {
                break;
            }
        }
        chain.push(j);
    }

    let mut segments: Vec<(f64, f64)> = Vec::new();
    for w in chain.windows(2) {
        let (ia, ib) = (w[0], w[1]);
        if ib - ia < 2 {
            continue;
        }
        let refine_left = ia != 0;
        let refine_right = ib != last;
        let (mut a, mut b) = (xs[ia], xs[ib]);
        for _ in 0..50 {
            let (a_old, b_old) = (a, b);
            if refine_right {
                b = tangency(&g, &dg, a, &xs, ib, Side::Right);
            }
            if refine_left {
                a = tangency(&g, &dg, b, &xs, ia, Side::Left);
            }
            if !(refine_left && refine_right) || ((a - a_old).abs() < 1e-13 && (b - b_old).abs() < 1e-13) {
                break;
            }
        }
        // tiny chords over stretches where f is flat to rounding are noise
        let mid = 0.5 * (a + b);
        let chord_mid = 0.5 * (g(a) + g(b));
        if b - a < 1e-6 * (hi - lo) && (g(mid) - chord_mid).abs() < 1e-14 {
            continue;
        }
        segments.push((a, b));
    }

    let mut pieces = Vec::with_capacity(2 * segments.len() + 1);
    let mut cursor = lo;
    for (a, b) in segments {
        let a = a.max(cursor);
        if a > cursor {
            pieces.push(HullPiece::Base { s0: cursor, s1: a });
        }
        pieces.push(HullPiece::Linear { s0: a, f0: flux.raw(a), s1: b, f1: flux.raw(b) });
        cursor = b;
    }
    if cursor < hi {
        pieces.push(HullPiece::Base { s0: cursor, s1: hi });
    }
    Ok(pieces)
}

/// Uniform samples plus geometrically clustered points inside the first and
/// last cells, so that tangencies squeezed against an endpoint (singular
/// curvature for exponents below 2) are still resolved.
fn sample_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    let cluster: Vec<f64> = (1..=40).map(|k| h * 0.5f64.powi(k)).filter(|d| *d > 1e-13 * (hi - lo)).collect();
    let mut xs = Vec::with_capacity(n + 1 + 2 * cluster.len());
    xs.push(lo);
    xs.extend(cluster.iter().rev().map(|d| lo + d));
    xs.extend((1..n).map(|j| lo + h * j as f64));
    xs.extend(cluster.iter().map(|d| hi - d));
    xs.push(hi);
    xs
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
}

/// Moves the free endpoint `xs[idx]` of a chord anchored at `anchor` onto
/// the point where the chord touches the (sign-adjusted) flux tangentially.
fn tangency(g: &impl Fn(f64) -> f64, dg: &impl Fn(f64) -> f64, anchor: f64, xs: &[f64], idx: usize, side: Side) -> f64 {
    let phi = |s: f64| dg(s) * (s - anchor) - (g(s) - g(anchor));
    let free = xs[idx];
    // `outer` lies where the envelope follows the base function, `inner`
    // walks toward the anchor until it sits on the chord side.
    let (mut outer, step): (f64, isize) = match side {
        Side::Right => (xs[idx + 1], -1),
        Side::Left => (xs[idx - 1], 1),
    };
    let phi_out = phi(outer);
    if phi_out.abs() <= 1e-14 {
        return free;
    }
    let sign_out = phi_out.signum();
    let base_side = |s: f64| phi(s) * sign_out > 1e-14;

    let mut j = idx as isize + step;
    let mut inner = xs[j as usize];
    while base_side(inner) {
        j += step;
        let next = xs[j as usize];
        if (next - anchor).abs() < f64::EPSILON || j <= 0 || j as usize >= xs.len() - 1 {
            return free;
        }
        inner = next;
    }
    while (outer - inner).abs() > TANGENCY_TOL * 1e-2 {
        let mid = 0.5 * (inner + outer);
        if mid == inner || mid == outer {
            break;
        }
        if base_side(mid) {
            outer = mid;
        } else {
            inner = mid;
        }
    }
    0.5 * (inner + outer)
}
