//! Routing environment: obstacle primitives, ports, workspace box, clearance
//! and ray-probe queries, and the agent's observation vector.
//!
//! Obstacles are inflated by the pipe radius so that all checks run on the
//! pipe centerline. The workspace box is an impassable boundary treated the
//! same way.

use serde::{Deserialize, Serialize};

use crate::frenet::{Polyline, PathState};
use crate::machine::check_manufacturable;
use crate::profile::AdmissibleBounds;
use crate::reward::EpisodeState;
use crate::{Error, Result, Vec3};

pub const SCHEMA_VERSION: u32 = 1;
pub const OBS_DIM: usize = 31;
pub const PROBE_COUNT: usize = 14;

const UNIT_TOL: f64 = 1e-9;
const NORMALIZE_TOL: f64 = 1e-3;
const TRACE_EPS: f64 = 1e-9;
const TRACE_MAX_ITERS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Port {
    pub position: Vec3,
    pub direction: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Obstacle {
    Sphere { center: Vec3, radius: f64 },
    Box { min: Vec3, max: Vec3 },
    Capsule { p0: Vec3, p1: Vec3, radius: f64 },
}

impl Obstacle {
    /// Signed distance from `p` to the obstacle surface (negative inside).
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match self {
            Obstacle::Sphere { center, radius } => (p - center).norm() - radius,
            Obstacle::Box { min, max } => box_sdf(p, min, max),
            Obstacle::Capsule { p0, p1, radius } => segment_distance(p, p0, p1) - radius,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        match self {
            Obstacle::Sphere { center, radius } | Obstacle::Capsule { p0: center, radius, .. } => {
                if !(radius.is_finite() && *radius > 0.0) || !finite(center) {
                    return Err(Error::Scene(format!("obstacle radius must be positive, got {radius}")));
                }
                if let Obstacle::Capsule { p1, .. } = self {
                    if !finite(p1) {
                        return Err(Error::Scene("non-finite capsule endpoint".into()));
                    }
                }
            }
            Obstacle::Box { min, max } => {
                if !finite(min) || !finite(max) || (0..3).any(|i| min[i] >= max[i]) {
                    return Err(Error::Scene(format!(
                        "box corners must satisfy min < max componentwise: {:?} / {:?}",
                        min.as_slice(),
                        max.as_slice()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn box_sdf(p: &Vec3, min: &Vec3, max: &Vec3) -> f64 {
    let center = (min + max) * 0.5;
    let half = (max - min) * 0.5;
    let q = (p - center).abs() - half;
    let outside = q.map(|v| v.max(0.0)).norm();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

/// Axis-aligned workspace bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Workspace {
    pub min: Vec3,
    pub max: Vec3,
}

impl Workspace {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn half_extent(&self) -> Vec3 {
        (self.max - self.min) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    /// Distance to the nearest face, negative outside.
    pub fn inner_distance(&self, p: &Vec3) -> f64 {
        -box_sdf(p, &self.min, &self.max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: String,
    pub obstacles: Vec<Obstacle>,
    pub start: Port,
    pub target: Port,
    pub workspace: Workspace,
    pub pipe_diameter: f64,
}

impl Scene {
    pub fn pipe_radius(&self) -> f64 {
        0.5 * self.pipe_diameter
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pipe_diameter.is_finite() && self.pipe_diameter > 0.0) {
            return Err(Error::Scene(format!("pipe_diameter must be positive, got {}", self.pipe_diameter)));
        }
        let ws = &self.workspace;
        if (0..3).any(|i| !(ws.min[i] < ws.max[i])) {
            return Err(Error::Scene("workspace min must be below max on every axis".into()));
        }
        for (label, port) in [("start", &self.start), ("target", &self.target)] {
            if !ws.contains(&port.position) {
                return Err(Error::Scene(format!("{label} port lies outside the workspace")));
            }
            if ((port.direction.norm()) - 1.0).abs() > UNIT_TOL {
                return Err(Error::Scene(format!("{label} port direction is not unit length")));
            }
        }
        for o in &self.obstacles {
            o.validate()?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scene document

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub pipe_diameter: f64,
    pub workspace: WorkspaceDoc,
    pub routes: Vec<RouteDoc>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceDoc {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteDoc {
    pub name: String,
    pub start: PortDoc,
    pub target: PortDoc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortDoc {
    pub position: [f64; 3],
    pub direction: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleDoc {
    Sphere { center: [f64; 3], radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
    Capsule { p0: [f64; 3], p1: [f64; 3], radius: f64 },
}

impl SceneDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let doc: SceneDocument = toml::from_str(text).map_err(|e| Error::Scene(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Scene(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        if doc.routes.is_empty() {
            return Err(Error::Scene("scene declares no routes".into()));
        }
        Ok(doc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene document serializes")
    }

    /// Builds the scene for the named route, or the first route when `None`.
    pub fn scene(&self, route: Option<&str>) -> Result<Scene> {
        let r = match route {
            None => &self.routes[0],
            Some(name) => self
                .routes
                .iter()
                .find(|r| r.name == name)
                .or_else(|| name.parse::<usize>().ok().and_then(|i| self.routes.get(i)))
                .ok_or_else(|| Error::Scene(format!("no route named {name:?}")))?,
        };
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| match *o {
                ObstacleDoc::Sphere { center, radius } => Obstacle::Sphere { center: center.into(), radius },
                ObstacleDoc::Box { min, max } => Obstacle::Box { min: min.into(), max: max.into() },
                ObstacleDoc::Capsule { p0, p1, radius } => Obstacle::Capsule {
                    p0: p0.into(),
                    p1: p1.into(),
                    radius,
                },
            })
            .collect();
        let scene = Scene {
            name: if self.name.is_empty() { r.name.clone() } else { format!("{}/{}", self.name, r.name) },
            obstacles,
            start: port_from_doc(&r.start, "start")?,
            target: port_from_doc(&r.target, "target")?,
            workspace: Workspace {
                min: self.workspace.min.into(),
                max: self.workspace.max.into(),
            },
            pipe_diameter: self.pipe_diameter,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn route_names(&self) -> Vec<&str> {
        self.routes.iter().map(|r| r.name.as_str()).collect()
    }
}

fn port_from_doc(doc: &PortDoc, label: &str) -> Result<Port> {
    let direction = Vec3::from(doc.direction);
    let norm = direction.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Scene(format!("{label} port direction has zero length")));
    }
    // Directions close to unit length are snapped; anything else is an error
    // unless it is an exact axis-aligned multiple.
    let axis_aligned = direction.iter().filter(|v| **v != 0.0).count() == 1;
    if (norm - 1.0).abs() > NORMALIZE_TOL && !axis_aligned {
        return Err(Error::Scene(format!("{label} port direction has length {norm}, expected 1")));
    }
    Ok(Port {
        position: doc.position.into(),
        direction: direction / norm,
    })
}

/// Parses and validates a scene document, using its first route.
pub fn load_scene(text: &str) -> Result<Scene> {
    SceneDocument::parse(text)?.scene(None)
}

// ---------------------------------------------------------------------------
// Queries

/// Signed clearance of the pipe centerline at `point`: distance to the
/// nearest obstacle or workspace face minus the pipe radius.
pub fn min_clearance(point: &Vec3, scene: &Scene) -> f64 {
    let rp = scene.pipe_radius();
    let mut best = scene.workspace.inner_distance(point);
    for o in &scene.obstacles {
        best = best.min(o.signed_distance(point));
    }
    best - rp
}

/// Distance along `direction` to the first inflated obstacle or workspace
/// face, clamped to `max_range`. Sphere tracing on the clearance field.
pub fn ray_probe(point: &Vec3, direction: &Vec3, scene: &Scene, max_range: f64) -> f64 {
    let mut t = 0.0;
    for _ in 0..TRACE_MAX_ITERS {
        let c = min_clearance(&(point + direction * t), scene);
        if c <= TRACE_EPS {
            return t.min(max_range);
        }
        t += c;
        if t >= max_range {
            return max_range;
        }
    }
    t.min(max_range)
}

/// Fractions of `n` equally spaced points on the segment (excluding its start)
/// that collide and that violate the bending-radius limit.
pub fn segment_indicators(polyline: &Polyline, scene: &Scene, r_min: f64, n: usize) -> (f64, f64) {
    let (Some(first), Some(last)) = (polyline.points.first(), polyline.points.last()) else {
        return (0.0, 0.0);
    };
    let n = n.max(2);
    let span = last.s - first.s;
    let mut obs = 0usize;
    let mut manuf = 0usize;
    for i in 1..=n {
        let s = first.s + span * i as f64 / n as f64;
        let p = polyline.interpolate(s).expect("non-empty polyline");
        if min_clearance(&p.r, scene) < 0.0 {
            obs += 1;
        }
        if !check_manufacturable(p.kappa, p.tau, r_min) {
            manuf += 1;
        }
    }
    (obs as f64 / n as f64, manuf as f64 / n as f64)
}

/// The 14 probe directions in the local frame: ±T, ±N, ±B and the eight
/// normalized diagonals (±T ± N ± B)/√3.
pub fn probe_directions(state: &PathState) -> [Vec3; PROBE_COUNT] {
    let f = &state.frame;
    let mut dirs = [Vec3::zeros(); PROBE_COUNT];
    dirs[0] = f.t;
    dirs[1] = -f.t;
    dirs[2] = f.n;
    dirs[3] = -f.n;
    dirs[4] = f.b;
    dirs[5] = -f.b;
    let inv = 1.0 / 3f64.sqrt();
    let mut k = 6;
    for st in [1.0, -1.0] {
        for sn in [1.0, -1.0] {
            for sb in [1.0, -1.0] {
                dirs[k] = (f.t * st + f.n * sn + f.b * sb) * inv;
                k += 1;
            }
        }
    }
    dirs
}

/// Agent observation.
///
/// Layout: `[0..3]` position normalized to the workspace, `[3..17]` ray
/// probes divided by the workspace diagonal, `[17]` κ/κ_max, `[18]` τ/τ_max,
/// `[19..22]` T, `[22..25]` N, `[25..28]` T_tar − T, `[28..31]` r_tar − r
/// divided by the workspace half extent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn observation(ep: &EpisodeState, scene: &Scene, bounds: &AdmissibleBounds) -> Observation {
    let st = &ep.path;
    let ws = &scene.workspace;
    let center = ws.center();
    let half = ws.half_extent();
    let max_range = ws.diagonal();
    let mut o = [0.0; OBS_DIM];
    for i in 0..3 {
        o[i] = ((st.r[i] - center[i]) / half[i]).clamp(-1.0, 1.0);
    }
    for (k, d) in probe_directions(st).iter().enumerate() {
        o[3 + k] = ray_probe(&st.r, d, scene, max_range) / max_range;
    }
    o[17] = (st.kappa / bounds.kappa_relaxed_hi).clamp(-1.0, 1.0);
    o[18] = (st.tau / bounds.tau_hi).clamp(-1.0, 1.0);
    let dt = scene.target.direction - st.frame.t;
    let dr = scene.target.position - st.r;
    for i in 0..3 {
        o[19 + i] = st.frame.t[i];
        o[22 + i] = st.frame.n[i];
        o[25 + i] = dt[i];
        o[28 + i] = (dr[i] / half[i]).clamp(-2.0, 2.0);
    }
    for v in o.iter_mut() {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    Observation(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frenet::Frame;

    const MINIMAL: &str = r#"
schema_version = 1
pipe_diameter = 25.0

[workspace]
min = [-500.0, -500.0, -500.0]
max = [500.0, 500.0, 500.0]

[[routes]]
name = "a"
start = { position = [0.0, 0.0, 0.0], direction = [1.0, 0.0, 0.0] }
target = { position = [100.0, 0.0, 0.0], direction = [1.0, 0.0, 0.0] }
"#;

    fn empty_scene() -> Scene {
        load_scene(MINIMAL).unwrap()
    }

    fn with_sphere(center: Vec3, radius: f64) -> Scene {
        let mut s = empty_scene();
        s.obstacles.push(Obstacle::Sphere { center, radius });
        s
    }

    #[test]
    fn minimal_document_loads() {
        let s = empty_scene();
        assert!(s.obstacles.is_empty());
        assert_eq!(s.pipe_radius(), 12.5);
    }

    #[test]
    fn negative_radius_rejected() {
        let text = format!("{MINIMAL}\n[[obstacles]]\nkind = \"sphere\"\ncenter = [0.0, 0.0, 0.0]\nradius = -1.0\n");
        assert!(matches!(load_scene(&text), Err(Error::Scene(_))));
    }

    #[test]
    fn direction_is_normalized() {
        let text = MINIMAL.replace("direction = [1.0, 0.0, 0.0] }\ntarget", "direction = [2.0, 0.0, 0.0] }\ntarget");
        let s = load_scene(&text).unwrap();
        assert_eq!(s.start.direction, Vec3::x());
        let text = MINIMAL.replace("direction = [1.0, 0.0, 0.0] }\ntarget", "direction = [1.0, 1.0, 0.0] }\ntarget");
        assert!(load_scene(&text).is_err());
    }

    #[test]
    fn port_outside_workspace_rejected() {
        let text = MINIMAL.replace("[100.0, 0.0, 0.0]", "[900.0, 0.0, 0.0]");
        assert!(matches!(load_scene(&text), Err(Error::Scene(_))));
    }

    #[test]
    fn unknown_fields_and_versions_rejected() {
        assert!(load_scene(&MINIMAL.replace("schema_version = 1", "schema_version = 2")).is_err());
        assert!(load_scene(&format!("{MINIMAL}\nextra = 3\n")).is_err());
    }

    #[test]
    fn clearance_cases() {
        let s = empty_scene();
        assert!((min_clearance(&Vec3::new(100.0, 0.0, 0.0), &s) - (400.0 - 12.5)).abs() < 1e-12);
        let s = with_sphere(Vec3::zeros(), 50.0);
        assert!((min_clearance(&Vec3::new(0.0, 100.0, 0.0), &s) - 37.5).abs() < 1e-12);
        assert!(min_clearance(&Vec3::new(0.0, 10.0, 0.0), &s) < 0.0);
        assert!(min_clearance(&Vec3::new(600.0, 0.0, 0.0), &s) < 0.0);
    }

    #[test]
    fn box_and_capsule_distances() {
        let b = Obstacle::Box { min: Vec3::new(-1.0, -1.0, -1.0), max: Vec3::new(1.0, 1.0, 1.0) };
        assert!((b.signed_distance(&Vec3::new(3.0, 0.0, 0.0)) - 2.0).abs() < 1e-15);
        assert!((b.signed_distance(&Vec3::new(0.5, 0.0, 0.0)) + 0.5).abs() < 1e-15);
        assert!((b.signed_distance(&Vec3::new(2.0, 2.0, 1.0)) - 2f64.sqrt()).abs() < 1e-15);
        let c = Obstacle::Capsule { p0: Vec3::zeros(), p1: Vec3::new(10.0, 0.0, 0.0), radius: 1.0 };
        assert!((c.signed_distance(&Vec3::new(5.0, 3.0, 0.0)) - 2.0).abs() < 1e-15);
        assert!((c.signed_distance(&Vec3::new(13.0, 0.0, 0.0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn probes() {
        let s = empty_scene();
        // face at x = 500 is 92.5 mm away, 80 mm after pipe inflation
        let p = Vec3::new(407.5, 0.0, 0.0);
        assert!((ray_probe(&p, &Vec3::x(), &s, 200.0) - 80.0).abs() < 1e-6);
        assert_eq!(ray_probe(&Vec3::zeros(), &Vec3::x(), &s, 100.0), 100.0);
        let s = with_sphere(Vec3::new(0.0, 0.0, 100.0), 50.0);
        assert!((ray_probe(&Vec3::zeros(), &Vec3::z(), &s, 1000.0) - 37.5).abs() < 1e-6);
    }

    #[test]
    fn centered_probes_agree_within_each_class() {
        let s = empty_scene();
        let state = PathState::at_port(Vec3::zeros(), Vec3::x()).unwrap();
        let range = s.workspace.diagonal();
        let hits: Vec<f64> = probe_directions(&state).iter().map(|d| ray_probe(&state.r, d, &s, range)).collect();
        // axis probes reach a face, diagonal probes a corner
        for h in &hits[..6] {
            assert!((h - 487.5).abs() < 1e-9);
        }
        for h in &hits[6..] {
            assert!((h - 487.5 * 3f64.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn indicators() {
        use crate::frenet::Sample;
        let s = with_sphere(Vec3::zeros(), 50.0);
        let mk = |x: f64, kappa: f64, tau: f64| Sample {
            s: x,
            r: Vec3::new(x, 0.0, 0.0),
            frame: Frame::from_tangent(Vec3::x()).unwrap(),
            kappa,
            tau,
        };
        let inside = Polyline::new(vec![mk(0.0, 0.01, 0.0), mk(10.0, 0.01, 0.0)]);
        assert_eq!(segment_indicators(&inside, &s, 100.0, 20), (1.0, 0.0));
        let bad = Polyline::new(vec![mk(0.0, 0.01, 0.005), mk(10.0, 0.01, 0.005)]);
        assert_eq!(segment_indicators(&bad, &s, 100.0, 20).1, 1.0);
    }

    #[test]
    fn observation_layout() {
        let mut s = empty_scene();
        s.target = Port { position: Vec3::new(0.0, 0.0, 0.0), direction: Vec3::x() };
        let bounds = crate::profile::admissible_bounds(100.0);
        let ep = EpisodeState::new(PathState::at_port(Vec3::zeros(), Vec3::x()).unwrap());
        let o = observation(&ep, &s, &bounds);
        assert_eq!(o.0[17], 0.0);
        assert_eq!(o.0[18], 0.0);
        assert!(o.0[25..31].iter().all(|v| *v == 0.0));
        let axis = o.0[3];
        assert!(o.0[3..9].iter().all(|v| (v - axis).abs() < 1e-9));
        let diag = o.0[9];
        assert!(o.0[9..17].iter().all(|v| (v - diag).abs() < 1e-9));
    }
}
