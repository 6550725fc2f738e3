//! Piecewise cubic Hermite curvature and torsion profiles.
//!
//! Knots carry zero first derivatives, so each segment is monotone between
//! its end values and the profile is C¹ everywhere. Segments are local: adding
//! a knot never touches the cubics already built.

use crate::{Error, Result};

/// Tolerance for evaluating slightly past either end of the domain, which
/// happens when arc-length marks are accumulated in floating point.
const DOMAIN_SLACK: f64 = 1e-9;

/// Cubic `c1·u³ + c2·u² + c3·u + c4` with `u = s − s0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cubic {
    pub s0: f64,
    pub c: [f64; 4],
}

impl Cubic {
    pub fn eval(&self, s: f64) -> f64 {
        let u = s - self.s0;
        ((self.c[0] * u + self.c[1]) * u + self.c[2]) * u + self.c[3]
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let u = s - self.s0;
        (3.0 * self.c[0] * u + 2.0 * self.c[1]) * u + self.c[2]
    }
}

/// Hermite coefficients for the interval `[s0, s1]` with end values `v0, v1`
/// and end slopes `d0, d1`.
pub fn hermite_coeffs(s0: f64, s1: f64, v0: f64, v1: f64, d0: f64, d1: f64) -> Result<[f64; 4]> {
    let h = s1 - s0;
    if !(h > 0.0) {
        return Err(Error::Domain(format!("interval [{s0}, {s1}] is empty")));
    }
    let dv = v1 - v0;
    let c2 = (3.0 * dv / h - 2.0 * d0 - d1) / h;
    let c1 = (-2.0 * dv / h + d0 + d1) / (h * h);
    Ok([c1, c2, d0, v0])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Knot {
    pub s: f64,
    pub kappa: f64,
    pub tau: f64,
}

/// Limits applied to every appended knot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnotLimits {
    pub s_max: f64,
    pub kappa_max: f64,
    pub tau_max: f64,
}

impl KnotLimits {
    /// Relaxed manufacturable box for a minimum bending radius.
    pub fn relaxed(r_min: f64, s_max: f64) -> Self {
        let b = admissible_bounds(r_min);
        Self {
            s_max,
            kappa_max: b.kappa_relaxed_hi,
            tau_max: b.tau_hi,
        }
    }

    pub fn unbounded() -> Self {
        Self {
            s_max: f64::INFINITY,
            kappa_max: f64::INFINITY,
            tau_max: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoProfile {
    knots: Vec<Knot>,
    kappa: Vec<Cubic>,
    tau: Vec<Cubic>,
    limits: KnotLimits,
}

impl GeoProfile {
    /// Profile holding only the implicit straight knot at `s = 0`.
    pub fn new(limits: KnotLimits) -> Self {
        Self {
            knots: vec![Knot { s: 0.0, kappa: 0.0, tau: 0.0 }],
            kappa: Vec::new(),
            tau: Vec::new(),
            limits,
        }
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn limits(&self) -> KnotLimits {
        self.limits
    }

    /// Arc length of the last knot.
    pub fn s_last(&self) -> f64 {
        self.knots.last().map(|k| k.s).unwrap_or(0.0)
    }

    pub fn kappa_segments(&self) -> &[Cubic] {
        &self.kappa
    }

    pub fn tau_segments(&self) -> &[Cubic] {
        &self.tau
    }

    /// Appends a knot `delta_s` past the last one, in place.
    pub fn push_knot(&mut self, delta_s: f64, kappa: f64, tau: f64) -> Result<()> {
        let lim = &self.limits;
        if !(delta_s > 0.0 && delta_s <= lim.s_max) {
            return Err(Error::RejectedAction(format!(
                "arc-length step {delta_s} outside (0, {}]",
                lim.s_max
            )));
        }
        if !(0.0..=lim.kappa_max).contains(&kappa) {
            return Err(Error::RejectedAction(format!(
                "curvature {kappa} outside [0, {}]",
                lim.kappa_max
            )));
        }
        if !(tau.abs() <= lim.tau_max) {
            return Err(Error::RejectedAction(format!(
                "torsion {tau} outside [-{0}, {0}]",
                lim.tau_max
            )));
        }
        let last = *self.knots.last().expect("profile always has a knot");
        let s1 = last.s + delta_s;
        let ck = hermite_coeffs(last.s, s1, last.kappa, kappa, 0.0, 0.0)?;
        let ct = hermite_coeffs(last.s, s1, last.tau, tau, 0.0, 0.0)?;
        self.kappa.push(Cubic { s0: last.s, c: ck });
        self.tau.push(Cubic { s0: last.s, c: ct });
        self.knots.push(Knot { s: s1, kappa, tau });
        Ok(())
    }

    /// Returns a copy with one more knot.
    pub fn append_knot(&self, delta_s: f64, kappa: f64, tau: f64) -> Result<Self> {
        let mut next = self.clone();
        next.push_knot(delta_s, kappa, tau)?;
        Ok(next)
    }

    fn locate(&self, s: f64) -> Result<Located> {
        let lo = self.knots[0].s;
        let hi = self.s_last();
        if !s.is_finite() || s < lo - DOMAIN_SLACK || s > hi + DOMAIN_SLACK {
            return Err(Error::Domain(format!("s = {s} outside profile domain [{lo}, {hi}]")));
        }
        let s = s.clamp(lo, hi);
        let idx = self.knots.partition_point(|k| k.s < s);
        if idx < self.knots.len() && self.knots[idx].s == s {
            return Ok(Located::Knot(idx));
        }
        Ok(Located::Segment(idx - 1, s))
    }

    /// (κ, τ) at arc length `s`. Exact at knots.
    pub fn eval(&self, s: f64) -> Result<(f64, f64)> {
        Ok(match self.locate(s)? {
            Located::Knot(i) => (self.knots[i].kappa, self.knots[i].tau),
            Located::Segment(i, s) => (self.kappa[i].eval(s), self.tau[i].eval(s)),
        })
    }

    /// (dκ/ds, dτ/ds). Zero at every knot by construction.
    pub fn eval_derivative(&self, s: f64) -> Result<(f64, f64)> {
        Ok(match self.locate(s)? {
            Located::Knot(_) => (0.0, 0.0),
            Located::Segment(i, s) => (self.kappa[i].derivative(s), self.tau[i].derivative(s)),
        })
    }

    /// Samples `(s, κ, τ)` every `ds`, always including the last knot.
    pub fn sample(&self, ds: f64) -> Result<Vec<(f64, f64, f64)>> {
        if !(ds > 0.0) {
            return Err(Error::Domain(format!("sample spacing must be positive, got {ds}")));
        }
        let end = self.s_last();
        let n = (end / ds * (1.0 + 1e-12)).floor() as usize;
        let mut out = Vec::with_capacity(n + 2);
        for i in 0..=n {
            let s = (i as f64 * ds).min(end);
            let (k, t) = self.eval(s)?;
            out.push((s, k, t));
        }
        if out.last().map(|p| end - p.0 > 1e-9).unwrap_or(true) {
            let (k, t) = self.eval(end)?;
            out.push((end, k, t));
        }
        Ok(out)
    }
}

enum Located {
    Knot(usize),
    Segment(usize, f64),
}

/// Manufacturable (κ, τ) ranges for a minimum bending radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibleBounds {
    pub r_min: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub kappa_relaxed_hi: f64,
}

impl AdmissibleBounds {
    fn root(&self, tau: f64) -> Option<f64> {
        if !(tau.abs() <= self.tau_hi) {
            return None;
        }
        let r = self.r_min;
        Some((1.0 - 4.0 * r * r * tau * tau).max(0.0).sqrt())
    }

    /// Smallest manufacturable curvature for this torsion.
    pub fn kappa_lo(&self, tau: f64) -> Option<f64> {
        self.root(tau).map(|q| (1.0 - q) / (2.0 * self.r_min))
    }

    /// Largest manufacturable curvature for this torsion.
    pub fn kappa_hi(&self, tau: f64) -> Option<f64> {
        self.root(tau).map(|q| (1.0 + q) / (2.0 * self.r_min))
    }

    /// Whether (κ, τ) lies in the relaxed box `[0, 1/R] × [−1/2R, 1/2R]`.
    pub fn in_relaxed(&self, kappa: f64, tau: f64) -> bool {
        (0.0..=self.kappa_relaxed_hi).contains(&kappa) && (self.tau_lo..=self.tau_hi).contains(&tau)
    }
}

pub fn admissible_bounds(r_min: f64) -> AdmissibleBounds {
    let tau_hi = 1.0 / (2.0 * r_min);
    AdmissibleBounds {
        r_min,
        tau_lo: -tau_hi,
        tau_hi,
        kappa_relaxed_hi: 1.0 / r_min,
    }
}
