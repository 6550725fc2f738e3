//! Six-axis free-bending kinematics.
//!
//! Each sample of a finished path is treated as a short spiral microelement
//! with base radius R₀ and lead P₀. The bending die is deflected by α_A and
//! offset by U_y, and the offset is swept around the feed axis by the
//! accumulated rotation Σα_z.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Curvature below which a sample counts as straight.
pub const DEFAULT_KAPPA_EPS: f64 = 1e-6;

/// Relative slack on the bending-radius comparison so that points on the
/// exact admissible boundary are not rejected by rounding.
pub const RADIUS_REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    /// Bending-die to guider center distance, mm.
    pub a0: f64,
    /// Springback correction factor.
    pub k: f64,
    /// Pusher feed speed, mm/s.
    pub v_z: f64,
    /// Minimum manufacturable bending radius, mm.
    pub r_min: f64,
    #[serde(default = "default_kappa_eps")]
    pub kappa_eps: f64,
    /// Arc-length spacing used when sampling a path for the die program, mm.
    #[serde(default = "default_sample_ds")]
    pub sample_ds: f64,
}

fn default_kappa_eps() -> f64 {
    DEFAULT_KAPPA_EPS
}

fn default_sample_ds() -> f64 {
    1.0
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            a0: 40.0,
            k: 1.5,
            v_z: 1.5,
            r_min: 100.0,
            kappa_eps: DEFAULT_KAPPA_EPS,
            sample_ds: 1.0,
        }
    }
}

impl MachineConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("a0", self.a0),
            ("k", self.k),
            ("v_z", self.v_z),
            ("r_min", self.r_min),
            ("sample_ds", self.sample_ds),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("machine {name} must be positive, got {v}")));
            }
        }
        if !(self.kappa_eps >= 0.0) {
            return Err(Error::Config("machine kappa_eps must be non-negative".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: MachineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("machine config serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HelixParams {
    /// Base radius, mm.
    pub r0: f64,
    /// Lead per turn, mm.
    pub p0: f64,
}

/// Base radius and lead of the spiral with constant (κ, τ); `None` for a
/// straight sample (κ below `kappa_eps`).
pub fn helix_params(kappa: f64, tau: f64, kappa_eps: f64) -> Option<HelixParams> {
    if kappa < kappa_eps {
        return None;
    }
    let c2 = kappa * kappa + tau * tau;
    Some(HelixParams {
        r0: kappa / c2,
        p0: 2.0 * PI * tau / c2,
    })
}

/// Die deflection angle α_A and Y offset U_y for a spiral of base radius R₀.
pub fn die_deflection(h: &HelixParams, cfg: &MachineConfig) -> Result<(f64, f64)> {
    if !h.r0.is_finite() {
        return Ok((0.0, 0.0));
    }
    let ratio = cfg.k * cfg.a0 / h.r0;
    if !(ratio <= 1.0) {
        return Err(Error::InfeasibleGeometry { index: 0, s: 0.0, ratio });
    }
    let alpha_a = ratio.asin();
    Ok((alpha_a, h.r0 * (1.0 - alpha_a.cos())))
}

/// Rotation about the feed axis accumulated over arc length `d`.
fn feed_rotation(h: &HelixParams, d: f64) -> f64 {
    let circ = 2.0 * PI * h.r0;
    2.0 * PI * d * h.p0 / (circ * circ + h.p0 * h.p0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiePose {
    pub px: f64,
    pub py: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub t: f64,
}

impl DiePose {
    pub const HOME: DiePose = DiePose { px: 0.0, py: 0.0, phi_a: 0.0, phi_b: 0.0, t: 0.0 };

    fn swept(alpha_a: f64, u_y: f64, alpha_z: f64, t: f64) -> Self {
        let (sin, cos) = alpha_z.sin_cos();
        DiePose {
            px: u_y * sin,
            py: u_y * cos,
            phi_a: -alpha_a * cos,
            phi_b: alpha_a * sin,
            t,
        }
    }

    pub fn radial_offset(&self) -> f64 {
        self.px.hypot(self.py)
    }

    pub fn tilt(&self) -> f64 {
        self.phi_a.hypot(self.phi_b)
    }
}

/// One die-program sample: spacing from the previous sample and the local
/// curvature and torsion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BendSample {
    pub d: f64,
    pub kappa: f64,
    pub tau: f64,
}

/// Die poses for consecutive path samples. The first spacing is zero; the
/// stage-1 lead-in time R₀¹α_A¹/v_z is added once, at the first sample.
pub fn die_pose_sequence(samples: &[BendSample], cfg: &MachineConfig) -> Result<Vec<DiePose>> {
    let mut poses = Vec::with_capacity(samples.len());
    let mut swept = 0.0;
    let mut s = 0.0;
    let mut feed_time = 0.0;
    let mut lead_in = 0.0;
    for (i, smp) in samples.iter().enumerate() {
        let d = if i == 0 { 0.0 } else { smp.d };
        s += d;
        feed_time += d / cfg.v_z;
        let (alpha_a, u_y) = match helix_params(smp.kappa, smp.tau, cfg.kappa_eps) {
            None => (0.0, 0.0),
            Some(h) => {
                let (alpha_a, u_y) = die_deflection(&h, cfg).map_err(|e| match e {
                    Error::InfeasibleGeometry { ratio, .. } => Error::InfeasibleGeometry { index: i, s, ratio },
                    other => other,
                })?;
                swept += feed_rotation(&h, d);
                if i == 0 {
                    lead_in = h.r0 * alpha_a / cfg.v_z;
                }
                (alpha_a, u_y)
            }
        };
        poses.push(DiePose::swept(alpha_a, u_y, swept, lead_in + feed_time));
    }
    Ok(poses)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpiralStages {
    pub stage1: DiePose,
    pub stage2: DiePose,
    pub t1: f64,
    pub t2: f64,
}

/// Closed-form stage-1 and stage-2 end poses and durations for a spiral of
/// base radius `r0`, lead `p0` and arc length `l0`.
pub fn spiral_stage_poses(r0: f64, p0: f64, l0: f64, cfg: &MachineConfig) -> Result<SpiralStages> {
    let h = HelixParams { r0, p0 };
    let (alpha_a, u_y) = die_deflection(&h, cfg)?;
    let t1 = r0 * alpha_a / cfg.v_z;
    let t2 = l0 / cfg.v_z;
    let alpha_z = 2.0 * PI * l0 * p0 / ((2.0 * PI * r0).powi(2) + p0 * p0);
    Ok(SpiralStages {
        stage1: DiePose { px: 0.0, py: u_y, phi_a: -alpha_a, phi_b: 0.0, t: t1 },
        stage2: DiePose::swept(alpha_a, u_y, alpha_z, t1 + t2),
        t1,
        t2,
    })
}

/// Whether a sample respects the minimum bending radius. Straight samples
/// always do.
pub fn check_manufacturable(kappa: f64, tau: f64, r_min: f64) -> bool {
    if kappa < DEFAULT_KAPPA_EPS {
        return true;
    }
    kappa / (kappa * kappa + tau * tau) >= r_min * (1.0 - RADIUS_REL_TOL)
}

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t_s", "Px_mm", "Py_mm", "phiA_rad", "phiB_rad", "z_mm", "vPx_mm_s", "vPy_mm_s", "vphiA_rad_s",
    "vphiB_rad_s", "vz_mm_s",
];

/// Derivative by finite differences over possibly uneven time steps:
/// one-sided at the ends, central in the interior.
fn finite_difference(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|i| {
            let (a, b) = match (i, n) {
                (_, 1) => return 0.0,
                (0, _) => (0, 1),
                (i, n) if i + 1 == n => (i - 1, i),
                (i, _) => (i - 1, i + 1),
            };
            let dt = t[b] - t[a];
            if dt > 0.0 {
                (v[b] - v[a]) / dt
            } else {
                0.0
            }
        })
        .collect()
}

/// Die trajectory as CSV: pose columns, feed position z = v_z·t, and
/// finite-difference velocities. Floats use 17 significant digits.
pub fn export_trajectory(poses: &[DiePose], cfg: &MachineConfig) -> String {
    let t: Vec<f64> = poses.iter().map(|p| p.t).collect();
    let cols: [Vec<f64>; 5] = [
        poses.iter().map(|p| p.px).collect(),
        poses.iter().map(|p| p.py).collect(),
        poses.iter().map(|p| p.phi_a).collect(),
        poses.iter().map(|p| p.phi_b).collect(),
        t.iter().map(|t| cfg.v_z * t).collect(),
    ];
    let vel: Vec<Vec<f64>> = cols.iter().map(|c| finite_difference(&t, c)).collect();
    let mut out = TRAJECTORY_HEADER.join(",");
    out.push('\n');
    for i in 0..poses.len() {
        let mut row = vec![t[i]];
        row.extend(cols.iter().map(|c| c[i]));
        row.extend(vel.iter().map(|c| c[i]));
        let line: Vec<String> = row.iter().map(|v| crate::io::fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Reads the pose columns back from a trajectory CSV.
pub fn parse_trajectory(text: &str) -> Result<Vec<DiePose>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("trajectory column {name} missing")))
    };
    let idx = [col("t_s")?, col("Px_mm")?, col("Py_mm")?, col("phiA_rad")?, col("phiB_rad")?];
    let mut poses = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v = |k: usize| crate::io::parse_f64(rec.get(idx[k]).unwrap_or(""));
        poses.push(DiePose { t: v(0)?, px: v(1)?, py: v(2)?, phi_a: v(3)?, phi_b: v(4)? });
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MachineConfig {
        MachineConfig::default()
    }

    #[test]
    fn helix_parameter_cases() {
        let h = helix_params(0.01, 0.0, DEFAULT_KAPPA_EPS).unwrap();
        assert!((h.r0 - 100.0).abs() < 1e-12 && h.p0 == 0.0);
        let h = helix_params(0.004, 0.004, DEFAULT_KAPPA_EPS).unwrap();
        assert!((h.r0 - 125.0).abs() < 1e-9);
        assert!((h.p0 - 785.398).abs() < 1e-3);
        // forward relation: κ = R/(R² + (P/2π)²)
        let pitch = h.p0 / (2.0 * PI);
        assert!((h.r0 / (h.r0 * h.r0 + pitch * pitch) - 0.004).abs() < 1e-15);
        let h = helix_params(0.005, 0.005, DEFAULT_KAPPA_EPS).unwrap();
        assert_eq!(h.r0, 100.0);
        assert!(helix_params(1e-7, 0.004, DEFAULT_KAPPA_EPS).is_none());
    }

    #[test]
    fn deflection_cases() {
        let (a, u) = die_deflection(&HelixParams { r0: 100.0, p0: 0.0 }, &cfg()).unwrap();
        assert!((a - 0.6f64.asin()).abs() < 1e-15);
        assert!((a - 0.643501).abs() < 1e-6);
        assert!((u - 20.0).abs() < 1e-12);
        let (a, u) = die_deflection(&HelixParams { r0: f64::INFINITY, p0: 0.0 }, &cfg()).unwrap();
        assert_eq!((a, u), (0.0, 0.0));
        assert!(matches!(
            die_deflection(&HelixParams { r0: 50.0, p0: 0.0 }, &cfg()),
            Err(Error::InfeasibleGeometry { .. })
        ));
    }

    #[test]
    fn planar_arc_poses() {
        let samples: Vec<BendSample> = (0..10)
            .map(|i| BendSample { d: if i == 0 { 0.0 } else { 1.0 }, kappa: 0.01, tau: 0.0 })
            .collect();
        let poses = die_pose_sequence(&samples, &cfg()).unwrap();
        for p in &poses {
            assert_eq!(p.px, 0.0);
            assert!((p.py - 20.0).abs() < 1e-12);
            assert!((p.phi_a + 0.6f64.asin()).abs() < 1e-15);
            assert_eq!(p.phi_b, 0.0);
        }
        let t1 = 100.0 * 0.6f64.asin() / 1.5;
        assert!((poses[0].t - t1).abs() < 1e-12);
        assert!((poses[9].t - t1 - 9.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn straight_samples_stay_home() {
        let samples = vec![BendSample { d: 0.0, kappa: 0.0, tau: 0.0 }, BendSample { d: 2.0, kappa: 0.0, tau: 0.003 }];
        let poses = die_pose_sequence(&samples, &cfg()).unwrap();
        assert_eq!(poses[0], DiePose::HOME);
        assert_eq!(poses[1], DiePose { t: 2.0 / 1.5, ..DiePose::HOME });
    }

    #[test]
    fn infeasible_sample_reports_position() {
        let samples = vec![
            BendSample { d: 0.0, kappa: 0.0, tau: 0.0 },
            BendSample { d: 1.0, kappa: 0.0, tau: 0.0 },
            BendSample { d: 1.0, kappa: 0.02, tau: 0.0 },
        ];
        match die_pose_sequence(&samples, &cfg()) {
            Err(Error::InfeasibleGeometry { index, s, ratio }) => {
                assert_eq!(index, 2);
                assert_eq!(s, 2.0);
                assert!((ratio - 1.2).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stage_closed_forms() {
        let c = MachineConfig { a0: 40.0, k: 1.5, v_z: 1.5, ..cfg() };
        let st = spiral_stage_poses(100.0, 0.0, 100.0, &c).unwrap();
        assert_eq!(st.stage1.px, 0.0);
        assert!((st.stage1.py - 20.0).abs() < 1e-12);
        assert!((st.stage1.phi_a + 0.643501).abs() < 1e-6);
        assert!((st.t1 - 42.9).abs() < 0.05);
        assert!((st.t2 - 66.7).abs() < 0.05);
        assert_eq!((st.stage2.px, st.stage2.py, st.stage2.phi_a), (st.stage1.px, st.stage1.py, st.stage1.phi_a));
        let z = spiral_stage_poses(120.0, 300.0, 0.0, &c).unwrap();
        assert_eq!(z.t2, 0.0);
        assert_eq!((z.stage2.px, z.stage2.py), (z.stage1.px, z.stage1.py));
    }

    #[test]
    fn manufacturability_cases() {
        assert!(check_manufacturable(0.01, 0.0, 100.0));
        assert!(!check_manufacturable(0.01, 0.005, 100.0));
        assert!(check_manufacturable(0.0, 0.0, 100.0));
        assert!(check_manufacturable(0.0, 0.005, 100.0));
        assert!(!check_manufacturable(0.001, 0.005, 100.0));
    }

    #[test]
    fn home_trajectory_row() {
        let csv = export_trajectory(&[DiePose::HOME], &cfg());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], TRAJECTORY_HEADER.join(","));
        let values: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        assert!(values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let samples: Vec<BendSample> = (0..50)
            .map(|i| BendSample { d: if i == 0 { 0.0 } else { 1.0 }, kappa: 0.004 + 1e-5 * i as f64, tau: 0.003 })
            .collect();
        let poses = die_pose_sequence(&samples, &cfg()).unwrap();
        let csv = export_trajectory(&poses, &cfg());
        assert_eq!(parse_trajectory(&csv).unwrap(), poses);
    }

    #[test]
    fn config_parse_and_validate() {
        let c = MachineConfig::parse("a0 = 40.0\nk = 1.5\nv_z = 1.5\nr_min = 100.0\n").unwrap();
        assert_eq!(c, MachineConfig::default());
        assert!(MachineConfig::parse("a0 = -1.0\nk = 1.5\nv_z = 1.5\nr_min = 100.0\n").is_err());
        assert!(MachineConfig::parse("k = 1.5\nv_z = 1.5\nr_min = 100.0\n").is_err());
    }
}
