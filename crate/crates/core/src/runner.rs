//! Command implementations behind the `pipe-router` binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::frenet::Polyline;
use crate::io::{self, Checkpoint, LayoutDocument, Provenance, SimilarityDocument};
use crate::machine::{die_pose_sequence, export_trajectory, BendSample, MachineConfig};
use crate::metrics::{compare, layout_report, LayoutReport, SimilarityReport};
use crate::policy::{train, RLConfig};
use crate::reward::RewardWeights;
use crate::scene::{Scene, SceneDocument};
use crate::{Error, Result};

/// Spacing used to resample trajectories before comparing them, mm.
pub const COMPARE_SPACING: f64 = 1.0;

pub const POLYLINE_FILE: &str = "path.csv";
pub const PROFILE_FILE: &str = "profile.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const LOG_FILE: &str = "training_log.csv";
pub const TRACE_FILE: &str = "episode_trace.csv";
pub const REPORT_FILE: &str = "layout_report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scene_path: PathBuf,
    pub route: Option<String>,
    /// Machine config file; defaults apply when absent.
    pub machine_path: Option<PathBuf>,
    pub rl: RLConfig,
    pub weights: RewardWeights,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn load_scene_file(path: &Path, route: Option<&str>) -> Result<Scene> {
    SceneDocument::parse(&read(path)?)?.scene(route)
}

pub fn load_machine(path: Option<&Path>) -> Result<MachineConfig> {
    match path {
        Some(p) => MachineConfig::parse(&read(p)?),
        None => Ok(MachineConfig::default()),
    }
}

/// Reads `[rl]` and `[weights]` tables from an override file.
pub fn load_overrides(path: &Path) -> Result<(RLConfig, RewardWeights)> {
    #[derive(serde::Deserialize, Default)]
    #[serde(default, deny_unknown_fields)]
    struct Overrides {
        rl: RLConfig,
        weights: RewardWeights,
    }
    let o: Overrides = toml::from_str(&read(path)?).map_err(|e| Error::Config(e.to_string()))?;
    Ok((o.rl, o.weights))
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    scene: String,
    route: Option<&'a str>,
    seed: u64,
    workers: usize,
    machine: &'a MachineConfig,
    rl: &'a RLConfig,
    weights: &'a RewardWeights,
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

/// Die samples taken from a polyline's per-point curvature and torsion.
pub fn bend_samples(rows: &[(f64, f64, f64)]) -> Vec<BendSample> {
    rows.iter()
        .enumerate()
        .map(|(i, &(s, kappa, tau))| BendSample { d: if i == 0 { 0.0 } else { s - rows[i - 1].0 }, kappa, tau })
        .collect()
}

fn polyline_profile(poly: &Polyline) -> Vec<(f64, f64, f64)> {
    poly.points.iter().map(|p| (p.s, p.kappa, p.tau)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub polyline: PathBuf,
    pub profile: PathBuf,
    /// Absent when the path cannot be bent with the configured die.
    pub trajectory: Option<PathBuf>,
    pub log: PathBuf,
    pub trace: Option<PathBuf>,
    pub report: PathBuf,
    pub checkpoint: PathBuf,
    pub found_done: bool,
    pub layout: Option<LayoutReport>,
    /// Reason the die trajectory was not written.
    pub trajectory_error: Option<String>,
}

/// Trains on the scene and writes every artifact to `cfg.out_dir`.
pub fn cmd_route(cfg: &RunConfig) -> Result<RunArtifacts> {
    let scene = load_scene_file(&cfg.scene_path, cfg.route.as_deref())?;
    let machine = load_machine(cfg.machine_path.as_deref())?;
    cfg.rl.validate()?;
    cfg.weights.validate()?;
    let echo = toml::to_string(&ConfigEcho {
        scene: cfg.scene_path.display().to_string(),
        route: cfg.route.as_deref(),
        seed: cfg.seed,
        workers: cfg.workers,
        machine: &machine,
        rl: &cfg.rl,
        weights: &cfg.weights,
    })
    .map_err(|e| Error::Config(e.to_string()))?;
    let prov = Provenance::new(Some(cfg.seed), echo);
    fs::create_dir_all(&cfg.out_dir)?;

    let result = train(&scene, &machine, &cfg.rl, &cfg.weights, cfg.seed, cfg.workers);
    let result = match result {
        Ok(r) => r,
        Err(e) => {
            let note = format!("{}# training aborted: {e}\n", prov.comment_block());
            write(&cfg.out_dir, LOG_FILE, &note)?;
            return Err(e);
        }
    };

    let log = write(&cfg.out_dir, LOG_FILE, &io::write_log(&result.log, &prov))?;
    let checkpoint = write(
        &cfg.out_dir,
        CHECKPOINT_FILE,
        &io::to_json(&Checkpoint::new(result.best_params.clone(), prov.clone()))?,
    )?;

    let best = result.best_episode.as_ref();
    let (poly, layout) = match best.and_then(|b| b.path.clone()) {
        Some((poly, report)) => (poly, Some(report)),
        None => (best.map(|b| b.raw_path.clone()).unwrap_or_default(), None),
    };
    let report_value = layout.unwrap_or_else(|| layout_report(&poly, &scene, machine.r_min, &scene.target, cfg.rl.s_max));
    let polyline = write(&cfg.out_dir, POLYLINE_FILE, &io::write_polyline(&poly, &prov))?;
    let rows = polyline_profile(&poly);
    let profile = write(&cfg.out_dir, PROFILE_FILE, &io::write_profile(&rows, &prov))?;
    let trace = match best {
        Some(b) => Some(write(&cfg.out_dir, TRACE_FILE, &io::write_trace(&b.trace, &prov))?),
        None => None,
    };
    let report = write(
        &cfg.out_dir,
        REPORT_FILE,
        &io::to_json(&LayoutDocument { provenance: prov.clone(), report: report_value })?,
    )?;

    let (trajectory, trajectory_error) = match die_pose_sequence(&bend_samples(&rows), &machine) {
        Ok(poses) => {
            let text = format!("{}{}", prov.comment_block(), export_trajectory(&poses, &machine));
            (Some(write(&cfg.out_dir, TRAJECTORY_FILE, &text)?), None)
        }
        Err(e) => {
            let _ = fs::remove_file(cfg.out_dir.join(TRAJECTORY_FILE));
            (None, Some(e.to_string()))
        }
    };

    Ok(RunArtifacts {
        polyline,
        profile,
        trajectory,
        log,
        trace,
        report,
        checkpoint,
        found_done: result.found_done(),
        layout,
        trajectory_error,
    })
}

/// Layout report of a polyline document against a scene.
pub fn cmd_eval(
    polyline_path: &Path,
    scene_path: &Path,
    route: Option<&str>,
    machine_path: Option<&Path>,
    s_max: f64,
    out: Option<&Path>,
) -> Result<LayoutReport> {
    let poly = io::parse_polyline(&read(polyline_path)?)?;
    let scene = load_scene_file(scene_path, route)?;
    let machine = load_machine(machine_path)?;
    let report = layout_report(&poly, &scene, machine.r_min, &scene.target, s_max);
    if let Some(out) = out {
        let prov = Provenance::new(
            None,
            format!("polyline = {:?}\nscene = {:?}\nr_min = {}\ns_max = {s_max}", polyline_path, scene_path, machine.r_min),
        );
        fs::write(out, io::to_json(&LayoutDocument { provenance: prov, report })?)?;
    }
    Ok(report)
}

/// Die trajectory CSV from a profile CSV (`s_mm,kappa_per_mm,tau_per_mm`) or
/// a polyline document.
pub fn cmd_export_machine(input: &Path, machine_path: Option<&Path>) -> Result<String> {
    let text = read(input)?;
    let machine = load_machine(machine_path)?;
    let rows = match io::parse_profile(&text) {
        Ok(rows) => rows,
        Err(_) => polyline_profile(&io::parse_polyline(&text)?),
    };
    let poses = die_pose_sequence(&bend_samples(&rows), &machine)?;
    let prov = Provenance::new(None, format!("source = {:?}\n{}", input, machine.to_toml()));
    Ok(format!("{}{}", prov.comment_block(), export_trajectory(&poses, &machine)))
}

/// Similarity of two trajectories given as CSV files with x, y, z columns.
pub fn cmd_compare(a: &Path, b: &Path, eps: f64, out: Option<&Path>) -> Result<SimilarityReport> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("eps must be non-negative, got {eps}")));
    }
    let pa = io::parse_points(&read(a)?)?;
    let pb = io::parse_points(&read(b)?)?;
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::Parse("trajectory has no points".into()));
    }
    let report = compare(&pa, &pb, eps, COMPARE_SPACING);
    if let Some(out) = out {
        let prov = Provenance::new(None, format!("a = {a:?}\nb = {b:?}\nspacing_mm = {COMPARE_SPACING}"));
        fs::write(out, io::to_json(&SimilarityDocument { provenance: prov, eps_mm: eps, report })?)?;
    }
    Ok(report)
}
