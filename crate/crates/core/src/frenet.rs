//! Frenet–Serret path reconstruction.
//!
//! A path state carries a position and an orthonormal (T, N, B) frame. It is
//! advanced along arc length with classical fixed-step RK4 on the coupled
//! 12-dimensional system
//!
//! ```text
//! T' = κN,   N' = −κT + τB,   B' = −τN,   r' = T
//! ```
//!
//! and the frame is re-orthonormalized after every step.

use crate::profile::GeoProfile;
use crate::{Error, Result, Vec3};

/// Largest internal RK4 step used by [`integrate_segment`], in mm.
pub const MAX_RK4_STEP: f64 = 0.5;

const DEGENERATE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub t: Vec3,
    pub n: Vec3,
    pub b: Vec3,
}

impl Frame {
    /// Frame from a tangent and an approximate normal; `b` is `t × n`.
    pub fn new(t: Vec3, n: Vec3) -> Result<Self> {
        reorthonormalize(&Frame { t, n, b: t.cross(&n) })
    }

    /// Initial frame for a port direction: the normal starts from the
    /// coordinate axis least aligned with `t` (first axis on ties).
    pub fn from_tangent(t: Vec3) -> Result<Self> {
        let norm = t.norm();
        if !(norm > DEGENERATE_EPS) || !norm.is_finite() {
            return Err(Error::Frame(format!("tangent has norm {norm}")));
        }
        let t = t / norm;
        let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
        let mut best = axes[0];
        let mut best_dot = f64::INFINITY;
        for axis in axes {
            let d = t.dot(&axis).abs();
            if d < best_dot {
                best_dot = d;
                best = axis;
            }
        }
        Frame::new(t, best)
    }

    /// Largest deviation from orthonormality and right-handedness.
    pub fn orthonormality_error(&self) -> f64 {
        let unit = [self.t.norm(), self.n.norm(), self.b.norm()]
            .iter()
            .map(|n| (n - 1.0).abs())
            .fold(0.0, f64::max);
        let ortho = [self.t.dot(&self.n), self.t.dot(&self.b), self.n.dot(&self.b)]
            .iter()
            .map(|d| d.abs())
            .fold(0.0, f64::max);
        let hand = (self.t.cross(&self.n) - self.b).amax();
        unit.max(ortho).max(hand)
    }

    pub fn is_finite(&self) -> bool {
        self.t.iter().chain(self.n.iter()).chain(self.b.iter()).all(|v| v.is_finite())
    }
}

/// A point moving along the pipe axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathState {
    pub r: Vec3,
    pub frame: Frame,
    pub s: f64,
    pub kappa: f64,
    pub tau: f64,
}

impl PathState {
    /// State at arc length zero with zero curvature and torsion.
    pub fn at_port(position: Vec3, direction: Vec3) -> Result<Self> {
        Ok(Self {
            r: position,
            frame: Frame::from_tangent(direction)?,
            s: 0.0,
            kappa: 0.0,
            tau: 0.0,
        })
    }

    pub fn sample(&self) -> Sample {
        Sample {
            s: self.s,
            r: self.r,
            frame: self.frame,
            kappa: self.kappa,
            tau: self.tau,
        }
    }
}

/// One polyline sample. Same content as a [`PathState`].
pub type Sample = PathState;

/// Samples along a path at fixed arc-length spacing (the last spacing may be
/// shorter).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polyline {
    pub points: Vec<Sample>,
}

impl Polyline {
    pub fn new(points: Vec<Sample>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.points.last()
    }

    /// Appends `other`, dropping its first point when it duplicates our last.
    pub fn extend_from(&mut self, other: &Polyline) {
        let skip = match (self.points.last(), other.points.first()) {
            (Some(a), Some(b)) if (a.s - b.s).abs() < 1e-12 => 1,
            _ => 0,
        };
        self.points.extend(other.points.iter().skip(skip).copied());
    }

    /// Sum of chord lengths.
    pub fn chord_length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].r - w[0].r).norm()).sum()
    }

    /// Linear interpolation of position, curvature and torsion at arc length
    /// `s`, clamped to the polyline's range. The frame is taken from the
    /// nearer bracketing sample.
    pub fn interpolate(&self, s: f64) -> Option<Sample> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        if s <= first.s {
            return Some(*first);
        }
        if s >= last.s {
            return Some(*last);
        }
        let idx = self.points.partition_point(|p| p.s <= s);
        let (a, b) = (&self.points[idx - 1], &self.points[idx]);
        let span = b.s - a.s;
        let w = if span > 0.0 { (s - a.s) / span } else { 0.0 };
        Some(Sample {
            s,
            r: a.r + (b.r - a.r) * w,
            frame: if w < 0.5 { a.frame } else { b.frame },
            kappa: a.kappa + (b.kappa - a.kappa) * w,
            tau: a.tau + (b.tau - a.tau) * w,
        })
    }
}

#[derive(Clone, Copy)]
struct Deriv {
    t: Vec3,
    n: Vec3,
    b: Vec3,
    r: Vec3,
}

fn rhs(t: &Vec3, n: &Vec3, b: &Vec3, kappa: f64, tau: f64) -> Deriv {
    Deriv {
        t: n * kappa,
        n: -t * kappa + b * tau,
        b: -n * tau,
        r: *t,
    }
}

/// One raw RK4 step without re-orthonormalization. `curv` returns (κ, τ).
pub fn rk4_advance<F>(state: &PathState, mut curv: F, ds: f64) -> Result<PathState>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if !(ds > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {ds}")));
    }
    let s0 = state.s;
    let mut eval = |s: f64| -> Result<(f64, f64)> {
        let (k, t) = curv(s)?;
        if !k.is_finite() || !t.is_finite() {
            return Err(Error::Integration(format!(
                "non-finite curvature/torsion ({k}, {t}) at s = {s}"
            )));
        }
        Ok((k, t))
    };
    let (k1c, k1t) = eval(s0)?;
    let (kmc, kmt) = eval(s0 + 0.5 * ds)?;
    let (k4c, k4t) = eval(s0 + ds)?;

    let f = &state.frame;
    let h = ds;
    let d1 = rhs(&f.t, &f.n, &f.b, k1c, k1t);
    let d2 = rhs(
        &(f.t + d1.t * (h / 2.0)),
        &(f.n + d1.n * (h / 2.0)),
        &(f.b + d1.b * (h / 2.0)),
        kmc,
        kmt,
    );
    let d3 = rhs(
        &(f.t + d2.t * (h / 2.0)),
        &(f.n + d2.n * (h / 2.0)),
        &(f.b + d2.b * (h / 2.0)),
        kmc,
        kmt,
    );
    let d4 = rhs(&(f.t + d3.t * h), &(f.n + d3.n * h), &(f.b + d3.b * h), k4c, k4t);
    let combine = |a: Vec3, b: Vec3, c: Vec3, d: Vec3| (a + (b + c) * 2.0 + d) * (h / 6.0);

    let next = PathState {
        r: state.r + combine(d1.r, d2.r, d3.r, d4.r),
        frame: Frame {
            t: f.t + combine(d1.t, d2.t, d3.t, d4.t),
            n: f.n + combine(d1.n, d2.n, d3.n, d4.n),
            b: f.b + combine(d1.b, d2.b, d3.b, d4.b),
        },
        s: s0 + ds,
        kappa: k4c,
        tau: k4t,
    };
    if !next.r.iter().all(|v| v.is_finite()) || !next.frame.is_finite() {
        return Err(Error::Integration(format!("non-finite state after step at s = {s0}")));
    }
    Ok(next)
}

/// Advances `state` by `ds` with one RK4 step followed by frame
/// re-orthonormalization.
pub fn frenet_step<K, T>(state: &PathState, kappa_fn: K, tau_fn: T, ds: f64) -> Result<PathState>
where
    K: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
{
    step_with(state, |s| Ok((kappa_fn(s), tau_fn(s))), ds)
}

fn step_with<F>(state: &PathState, curv: F, ds: f64) -> Result<PathState>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut next = rk4_advance(state, curv, ds)?;
    next.frame = reorthonormalize(&next.frame)?;
    Ok(next)
}

/// Gram–Schmidt on (T, N), then B := T × N.
pub fn reorthonormalize(frame: &Frame) -> Result<Frame> {
    let t_norm = frame.t.norm();
    if !(t_norm > DEGENERATE_EPS) || !t_norm.is_finite() {
        return Err(Error::Frame(format!("tangent norm {t_norm}")));
    }
    let t = frame.t / t_norm;
    let n_perp = frame.n - t * t.dot(&frame.n);
    let n_norm = n_perp.norm();
    if !(n_norm > DEGENERATE_EPS) || !n_norm.is_finite() {
        return Err(Error::Frame("tangent and normal are (nearly) parallel".into()));
    }
    let n = n_perp / n_norm;
    Ok(Frame { t, n, b: t.cross(&n) })
}

/// Rotates N and B by `theta` about T.
pub fn rotate_frame_about_tangent(frame: &Frame, theta: f64) -> Frame {
    let (sin, cos) = theta.sin_cos();
    let n = frame.n * cos + frame.b * sin;
    let b = frame.b * cos - frame.n * sin;
    Frame { t: frame.t, n, b }
}

/// Closed-form state on the helix with constant (κ, τ) after arc length `s`,
/// starting from `initial`.
///
/// The frame rotates rigidly about the Darboux axis u = (τT₀ + κB₀)/c with
/// angular rate c = √(κ² + τ²); integrating T gives the position. The helix
/// has base radius κ/c² and axial rate τ/c².
pub fn analytic_helix(kappa: f64, tau: f64, s: f64, initial: &PathState) -> Result<PathState> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("helix needs kappa > 0, got {kappa}")));
    }
    let f = &initial.frame;
    let c = (kappa * kappa + tau * tau).sqrt();
    let axis = (f.t * tau + f.b * kappa) / c;
    let angle = c * s;
    let rotate = |v: &Vec3| -> Vec3 {
        let (sin, cos) = angle.sin_cos();
        v * cos + axis.cross(v) * sin + axis * axis.dot(v) * (1.0 - cos)
    };
    let (sin, cos) = angle.sin_cos();
    let dr = f.t * (kappa * kappa / (c * c * c) * sin + tau * tau / (c * c) * s)
        + f.n * (kappa / (c * c) * (1.0 - cos))
        + f.b * (kappa * tau / (c * c * c) * (angle - sin));
    Ok(PathState {
        r: initial.r + dr,
        frame: Frame {
            t: rotate(&f.t),
            n: rotate(&f.n),
            b: rotate(&f.b),
        },
        s: initial.s + s,
        kappa,
        tau,
    })
}

/// Integrates along `profile` from `state.s` to `s_end`, sampling every
/// `sample_ds` (the last interval may be shorter). Internal RK4 steps are at
/// most `min(sample_ds, MAX_RK4_STEP)`.
pub fn integrate_segment(
    state: &PathState,
    profile: &GeoProfile,
    s_end: f64,
    sample_ds: f64,
) -> Result<(Polyline, PathState)> {
    if !(sample_ds > 0.0) {
        return Err(Error::Domain(format!("sample spacing must be positive, got {sample_ds}")));
    }
    if !(s_end > state.s) {
        return Err(Error::Domain(format!(
            "segment end {s_end} must exceed start {}",
            state.s
        )));
    }
    let s0 = state.s;
    let (k0, t0) = profile.eval(s0)?;
    let mut current = PathState { kappa: k0, tau: t0, ..*state };
    let max_step = sample_ds.min(MAX_RK4_STEP);
    let span = s_end - s0;
    let full = (span / sample_ds * (1.0 + 1e-12)).floor() as usize;

    let mut marks: Vec<f64> = (1..=full).map(|i| s0 + i as f64 * sample_ds).collect();
    match marks.last() {
        Some(&m) if (s_end - m).abs() <= 1e-9 => *marks.last_mut().unwrap() = s_end,
        _ => marks.push(s_end),
    }

    let mut points = Vec::with_capacity(marks.len() + 1);
    points.push(current.sample());
    for &mark in &marks {
        let a = current.s;
        let len = mark - a;
        let n = (len / max_step * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for k in 0..n {
            let mut next = step_with(&current, |s| profile.eval(s), h)?;
            next.s = if k + 1 == n { mark } else { a + (k + 1) as f64 * h };
            current = next;
        }
        let (k, t) = profile.eval(mark)?;
        current.kappa = k;
        current.tau = t;
        points.push(current.sample());
    }
    Ok((Polyline::new(points), current))
}

/// Curvature of the circle through three points (0 for collinear points).
pub fn three_point_curvature(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let ab = b - a;
    let bc = c - b;
    let ac = c - a;
    let denom = ab.norm() * bc.norm() * ac.norm();
    if denom == 0.0 {
        return 0.0;
    }
    2.0 * ab.cross(&ac).norm() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn origin_state() -> PathState {
        PathState {
            r: Vec3::zeros(),
            frame: Frame { t: Vec3::x(), n: Vec3::y(), b: Vec3::z() },
            s: 0.0,
            kappa: 0.0,
            tau: 0.0,
        }
    }

    fn run_constant(kappa: f64, tau: f64, total: f64, ds: f64) -> PathState {
        let steps = (total / ds).round() as usize;
        let mut st = origin_state();
        for _ in 0..steps {
            st = frenet_step(&st, |_| kappa, |_| tau, ds).unwrap();
        }
        st
    }

    #[test]
    fn straight_line_with_zero_curvature() {
        let st = frenet_step(&origin_state(), |_| 0.0, |_| 0.0, 3.5).unwrap();
        assert!((st.r - Vec3::new(3.5, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(st.frame, origin_state().frame);
    }

    #[test]
    fn quarter_circle_matches_analytic() {
        // r(s) = (100 sin(s/100), 100(1 - cos(s/100)), 0)
        let st = run_constant(0.01, 0.0, 50.0 * PI, 50.0 * PI / 1000.0);
        assert!((st.r - Vec3::new(100.0, 100.0, 0.0)).norm() < 1e-4);
        assert!((st.frame.t - Vec3::y()).norm() < 1e-4);
    }

    #[test]
    fn helix_endpoint_on_cylinder() {
        let (k, t) = (0.004, 0.004);
        let c2: f64 = k * k + t * t;
        let radius = k / c2;
        assert!((radius - 125.0).abs() < 1e-9);
        let turn = 2.0 * PI / c2.sqrt();
        let n = 20_000;
        let st = run_constant(k, t, turn, turn / n as f64);
        let init = origin_state();
        let axis = (init.frame.t * t + init.frame.b * k).normalize();
        let center = init.r + init.frame.n * radius;
        let rel = st.r - center;
        let dist = (rel - axis * axis.dot(&rel)).norm();
        assert!((dist - 125.0).abs() < 1e-3, "radial distance {dist}");
    }

    #[test]
    fn helix_pitch() {
        let (k, t) = (0.004f64, 0.004f64);
        let c2 = k * k + t * t;
        let pitch = 2.0 * PI * t / c2;
        assert!((pitch - 2.0 * PI * 125.0).abs() < 1e-9);
        assert!((pitch - 785.398).abs() < 1e-3);
    }

    #[test]
    fn analytic_circle() {
        let st = analytic_helix(0.01, 0.0, 50.0 * PI, &origin_state()).unwrap();
        assert!((st.r - Vec3::new(100.0, 100.0, 0.0)).norm() < 1e-9);
        let half = analytic_helix(0.01, 0.0, 100.0 * PI, &origin_state()).unwrap();
        assert!((half.r - Vec3::new(0.0, 200.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn analytic_helix_rejects_nonpositive_kappa() {
        assert!(matches!(
            analytic_helix(0.0, 0.001, 1.0, &origin_state()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rk4_matches_analytic_helix_at_fine_step() {
        let st = run_constant(0.006, -0.003, 500.0, 0.01);
        let exact = analytic_helix(0.006, -0.003, 500.0, &origin_state()).unwrap();
        assert!((st.r - exact.r).norm() < 1e-4);
    }

    #[test]
    fn reorthonormalize_identity_and_projection() {
        let f = origin_state().frame;
        let g = reorthonormalize(&f).unwrap();
        assert!((g.t - f.t).amax() < 1e-12 && (g.n - f.n).amax() < 1e-12 && (g.b - f.b).amax() < 1e-12);

        let skew = Frame { t: Vec3::x(), n: Vec3::new(1e-4, 1.0, 0.0), b: Vec3::z() };
        let g = reorthonormalize(&skew).unwrap();
        assert!((g.n - Vec3::y()).amax() < 1e-8);
    }

    #[test]
    fn reorthonormalize_rejects_parallel() {
        let bad = Frame { t: Vec3::x(), n: Vec3::new(1.0, 1e-9, 0.0), b: Vec3::z() };
        assert!(matches!(reorthonormalize(&bad), Err(Error::Frame(_))));
    }

    #[test]
    fn raw_drift_is_repaired() {
        let mut st = origin_state();
        for _ in 0..10_000 {
            st = rk4_advance(&st, |_| Ok((0.01, 0.005)), 2.0).unwrap();
        }
        assert!(st.frame.orthonormality_error() > 1e-12);
        let fixed = reorthonormalize(&st.frame).unwrap();
        assert!(fixed.orthonormality_error() < 1e-12);
    }

    #[test]
    fn rotation_about_tangent() {
        let f = Frame::new(Vec3::z(), Vec3::x()).unwrap();
        assert!((rotate_frame_about_tangent(&f, 0.0).n - f.n).amax() < 1e-15);
        let g = rotate_frame_about_tangent(&f, PI / 2.0);
        assert!((g.n - Vec3::y()).amax() < 1e-15);
        assert_eq!(g.t, f.t);
        let h = rotate_frame_about_tangent(&rotate_frame_about_tangent(&f, PI), PI);
        assert!((h.n - f.n).amax() < 1e-12 && (h.b - f.b).amax() < 1e-12);
    }

    #[test]
    fn port_frame_rule() {
        let f = Frame::from_tangent(Vec3::x()).unwrap();
        assert_eq!(f.n, Vec3::y());
        let f = Frame::from_tangent(Vec3::new(0.0, 0.2, 1.0)).unwrap();
        assert!(f.n.x > 0.999);
        assert!(f.orthonormality_error() < 1e-12);
    }

    #[test]
    fn polyline_interpolation_clamps() {
        let a = origin_state();
        let mut b = a;
        b.s = 2.0;
        b.r = Vec3::new(2.0, 0.0, 0.0);
        b.kappa = 0.01;
        let p = Polyline::new(vec![a, b]);
        let m = p.interpolate(0.5).unwrap();
        assert!((m.r.x - 0.5).abs() < 1e-15 && (m.kappa - 0.0025).abs() < 1e-15);
        assert_eq!(p.interpolate(-1.0).unwrap().s, 0.0);
        assert_eq!(p.interpolate(9.0).unwrap().s, 2.0);
    }
}
