//! Layout quality metrics and trajectory similarity measures.

use serde::{Deserialize, Serialize};

use crate::frenet::Polyline;
use crate::machine::check_manufacturable;
use crate::reward::alignment_loss;
use crate::scene::{min_clearance, Port, Scene};
use crate::Vec3;

/// Spacing of the samples used for collision and bending-radius checks, mm.
pub const REPORT_SAMPLE_DS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutReport {
    /// Pipe length, mm.
    pub pl: f64,
    /// Collision free.
    pub cfi: bool,
    /// Fraction of samples below the minimum bending radius.
    pub mvr: f64,
    pub l_align: f64,
}

pub fn layout_report(polyline: &Polyline, scene: &Scene, r_min: f64, target: &Port, s_max: f64) -> LayoutReport {
    let Some(last) = polyline.last() else {
        return LayoutReport { pl: 0.0, cfi: true, mvr: 0.0, l_align: f64::NAN };
    };
    let first = polyline.points[0];
    let span = last.s - first.s;
    let n = (span / REPORT_SAMPLE_DS).ceil().max(0.0) as usize;
    let mut samples: Vec<_> = (0..=n)
        .filter_map(|i| polyline.interpolate(first.s + (i as f64 * REPORT_SAMPLE_DS).min(span)))
        .collect();
    samples.extend(polyline.points.iter().copied());

    let cfi = samples.iter().all(|p| min_clearance(&p.r, scene) >= 0.0);
    let grid = &samples[..=n];
    let violations = grid.iter().filter(|p| !check_manufacturable(p.kappa, p.tau, r_min)).count();
    LayoutReport {
        pl: polyline.chord_length(),
        cfi,
        mvr: violations as f64 / grid.len() as f64,
        l_align: alignment_loss(last, target, s_max).total,
    }
}

/// Points resampled at uniform arc-length spacing along the chords; the last
/// point is always kept.
pub fn resample_uniform(points: &[Vec3], spacing: f64) -> Vec<Vec3> {
    if points.len() < 2 || !(spacing > 0.0) {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut next_mark = spacing;
    let mut travelled = 0.0;
    for w in points.windows(2) {
        let seg = (w[1] - w[0]).norm();
        while seg > 0.0 && next_mark <= travelled + seg {
            let u = (next_mark - travelled) / seg;
            out.push(w[0] + (w[1] - w[0]) * u);
            next_mark += spacing;
        }
        travelled += seg;
    }
    let end = *points.last().unwrap();
    if (out.last().unwrap() - end).norm() > 1e-9 {
        out.push(end);
    }
    out
}

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).norm()
}

/// Longest common subsequence under a distance tolerance, divided by the
/// shorter length.
pub fn lcss(a: &[Vec3], b: &[Vec3], eps: f64) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return 0.0;
    }
    let mut prev = vec![0usize; m + 1];
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        for j in 1..=m {
            cur[j] = if dist(&a[i - 1], &b[j - 1]) <= eps {
                prev[j - 1] + 1
            } else {
                prev[j].max(cur[j - 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m] as f64 / n.min(m) as f64
}

/// Discrete Fréchet distance.
pub fn discrete_frechet(a: &[Vec3], b: &[Vec3]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return f64::NAN;
    }
    let mut ca = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let d = dist(&a[i], &b[j]);
            ca[i * m + j] = match (i, j) {
                (0, 0) => d,
                (0, _) => ca[j - 1].max(d),
                (_, 0) => ca[(i - 1) * m].max(d),
                _ => {
                    let best = ca[(i - 1) * m + j].min(ca[(i - 1) * m + j - 1]).min(ca[i * m + j - 1]);
                    best.max(d)
                }
            };
        }
    }
    ca[n * m - 1]
}

/// Dynamic time warping: minimum cumulative Euclidean cost, no band.
pub fn dtw(a: &[Vec3], b: &[Vec3]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return f64::NAN;
    }
    let mut d = vec![f64::INFINITY; m];
    let mut row = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            let c = dist(&a[i], &b[j]);
            row[j] = if i == 0 && j == 0 {
                c
            } else {
                let up = d[j];
                let left = if j > 0 { row[j - 1] } else { f64::INFINITY };
                let diag = if j > 0 { d[j - 1] } else { f64::INFINITY };
                up.min(left).min(diag) + c
            };
        }
        std::mem::swap(&mut d, &mut row);
    }
    d[m - 1]
}

/// Edit distance on real sequences: a pair within `eps` matches for free,
/// every substitution, insertion or deletion costs 1.
pub fn edit_distance(a: &[Vec3], b: &[Vec3], eps: f64) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let sub = usize::from(dist(&a[i - 1], &b[j - 1]) > eps);
            cur[j] = (prev[j - 1] + sub).min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub lcss_ratio: f64,
    pub frechet_mm: f64,
    pub dtw_mm: f64,
    pub edit_distance: usize,
}

/// All four measures on trajectories resampled at `spacing`.
pub fn compare(a: &[Vec3], b: &[Vec3], eps: f64, spacing: f64) -> SimilarityReport {
    let a = resample_uniform(a, spacing);
    let b = resample_uniform(b, spacing);
    SimilarityReport {
        lcss_ratio: lcss(&a, &b, eps),
        frechet_mm: discrete_frechet(&a, &b),
        dtw_mm: dtw(&a, &b),
        edit_distance: edit_distance(&a, &b, eps),
    }
}
