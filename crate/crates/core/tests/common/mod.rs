//! Reference implementations used as test oracles. They are written
//! independently of the library code they check: closed forms from a
//! canonical parametrization and exhaustive enumeration instead of dynamic
//! programming.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::Matrix3;
use pipe_router::frenet::{Frame, PathState};
use pipe_router::Vec3;

/// Helix with constant (κ, τ) from the canonical form
/// `(a cos t, a sin t, b t)`, rotated onto the initial frame.
pub fn helix_oracle(kappa: f64, tau: f64, s: f64, initial: &PathState) -> (Vec3, Vec3) {
    let c2 = kappa * kappa + tau * tau;
    let c = c2.sqrt();
    let a = kappa / c2;
    let b = tau / c2;
    let curve = |t: f64| Vec3::new(a * t.cos(), a * t.sin(), b * t);
    let tangent = |t: f64| Vec3::new(-a * t.sin(), a * t.cos(), b) * c;
    // canonical frame at t = 0
    let t0 = tangent(0.0);
    let n0 = Vec3::new(-1.0, 0.0, 0.0);
    let b0 = t0.cross(&n0);
    let canon = Matrix3::from_columns(&[t0, n0, b0]);
    let f = &initial.frame;
    let world = Matrix3::from_columns(&[f.t, f.n, f.b]);
    let m = world * canon.transpose();
    let t = c * s;
    (initial.r + m * (curve(t) - curve(0.0)), m * tangent(t))
}

pub fn start_state(t: Vec3, n: Vec3) -> PathState {
    PathState { r: Vec3::new(1.0, -2.0, 3.0), frame: Frame::new(t, n).unwrap(), s: 0.0, kappa: 0.0, tau: 0.0 }
}

/// Die pose at feed length `l0` on a spiral of base radius `r0` and lead
/// `p0`, written directly from the kinematic relations.
pub fn die_pose_oracle(r0: f64, p0: f64, l0: f64, a0: f64, k: f64, v_z: f64) -> [f64; 5] {
    let alpha_a = (k * a0 / r0).asin();
    let u_y = r0 - r0 * alpha_a.cos();
    let alpha_z = 2.0 * PI * l0 * p0 / ((2.0 * PI * r0).powi(2) + p0 * p0);
    let t = r0 * alpha_a / v_z + l0 / v_z;
    [u_y * alpha_z.sin(), u_y * alpha_z.cos(), -alpha_a * alpha_z.cos(), alpha_a * alpha_z.sin(), t]
}

fn d(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).norm()
}

/// Monotone couplings from (0, 0) to (n−1, m−1), each as its visited cells.
pub fn couplings(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn walk(i: usize, j: usize, n: usize, m: usize, path: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        path.push((i, j));
        if i + 1 == n && j + 1 == m {
            out.push(path.clone());
        } else {
            if i + 1 < n {
                walk(i + 1, j, n, m, path, out);
            }
            if j + 1 < m {
                walk(i, j + 1, n, m, path, out);
            }
            if i + 1 < n && j + 1 < m {
                walk(i + 1, j + 1, n, m, path, out);
            }
        }
        path.pop();
    }
    let mut out = Vec::new();
    walk(0, 0, n, m, &mut Vec::new(), &mut out);
    out
}

pub fn dtw_brute(a: &[Vec3], b: &[Vec3]) -> f64 {
    couplings(a.len(), b.len())
        .iter()
        .map(|p| p.iter().fold(0.0, |acc, &(i, j)| if i == 0 && j == 0 { d(&a[0], &b[0]) } else { acc + d(&a[i], &b[j]) }))
        .fold(f64::INFINITY, f64::min)
}

pub fn frechet_brute(a: &[Vec3], b: &[Vec3]) -> f64 {
    couplings(a.len(), b.len())
        .iter()
        .map(|p| p.iter().map(|&(i, j)| d(&a[i], &b[j])).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

fn subsets(n: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n)).map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect()).collect()
}

/// Longest matching pair of index subsequences, over the shorter length.
pub fn lcss_brute(a: &[Vec3], b: &[Vec3], eps: f64) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let sa = subsets(a.len());
    let sb = subsets(b.len());
    let mut best = 0;
    for x in &sa {
        for y in &sb {
            if x.len() == y.len() && x.len() > best && x.iter().zip(y).all(|(&i, &j)| d(&a[i], &b[j]) <= eps) {
                best = x.len();
            }
        }
    }
    best as f64 / a.len().min(b.len()) as f64
}

/// Plain recursion over the last elements.
pub fn edit_brute(a: &[Vec3], b: &[Vec3], eps: f64) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = usize::from(d(x, y) > eps);
            (edit_brute(ra, rb, eps) + sub).min(edit_brute(ra, b, eps) + 1).min(edit_brute(a, rb, eps) + 1)
        }
    }
}

/// Relative error with a floor on the denominator.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Scene document with one route and no obstacles.
pub fn open_scene(start: [f64; 3], start_dir: [f64; 3], target: [f64; 3], target_dir: [f64; 3]) -> String {
    format!(
        "schema_version = 1\npipe_diameter = 25.0\n[workspace]\nmin = [-300.0, -300.0, -300.0]\nmax = [600.0, 300.0, 300.0]\n\
         [[routes]]\nname = \"r\"\nstart = {{ position = {start:?}, direction = {start_dir:?} }}\n\
         target = {{ position = {target:?}, direction = {target_dir:?} }}\n"
    )
}
