//! Routing episodes: each action appends one Hermite knot, integrates the new
//! segment, and scores it.

use serde::{Deserialize, Serialize};

use crate::frenet::{integrate_segment, rotate_frame_about_tangent, PathState, Polyline};
use crate::profile::{admissible_bounds, AdmissibleBounds, GeoProfile, KnotLimits};
use crate::reward::{
    alignment_loss, finalize_path, objective_reward, progress_stage, stage_bonus, EpisodeState, ObjectiveParts,
    RewardWeights, Stage,
};
use crate::scene::{observation, segment_indicators, Observation, Scene};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub r_min: f64,
    /// Longest segment per action, mm.
    pub s_max: f64,
    pub max_steps: usize,
    /// Polyline spacing, mm.
    pub sample_ds: f64,
    /// Points checked per segment for collisions and bending radius.
    pub indicator_samples: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            r_min: 100.0,
            s_max: 20.0,
            max_steps: 64,
            sample_ds: 1.0,
            indicator_samples: 20,
        }
    }
}

/// Scaled action: arc length to the next knot, its curvature and torsion,
/// and the frame roll (used only on the first step).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action {
    pub delta_s: f64,
    pub kappa: f64,
    pub tau: f64,
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub objective: ObjectiveParts,
    pub obs_fraction: f64,
    pub manuf_fraction: f64,
    pub stage_bonus: f64,
    /// Weighted alignment improvement included in `stage_bonus`.
    pub align_reward: f64,
    pub l_align: f64,
    pub stage: Stage,
}

impl StepOutcome {
    pub fn terminal(&self) -> bool {
        self.stage.is_terminal()
    }
}

#[derive(Clone, Debug)]
pub struct RoutingEnv {
    scene: Scene,
    cfg: EnvConfig,
    weights: RewardWeights,
    bounds: AdmissibleBounds,
    profile: GeoProfile,
    ep: EpisodeState,
}

impl RoutingEnv {
    pub fn new(scene: Scene, cfg: EnvConfig, weights: RewardWeights) -> Result<Self> {
        let start = PathState::at_port(scene.start.position, scene.start.direction)?;
        let mut ep = EpisodeState::new(start);
        ep.l_align = alignment_loss(&start, &scene.target, cfg.s_max).total;
        Ok(Self {
            bounds: admissible_bounds(cfg.r_min),
            profile: GeoProfile::new(KnotLimits::relaxed(cfg.r_min, cfg.s_max)),
            scene,
            cfg,
            weights,
            ep,
        })
    }

    pub fn reset(&mut self) -> Result<Observation> {
        let start = PathState::at_port(self.scene.start.position, self.scene.start.direction)?;
        self.ep = EpisodeState::new(start);
        self.ep.l_align = alignment_loss(&start, &self.scene.target, self.cfg.s_max).total;
        self.profile = GeoProfile::new(KnotLimits::relaxed(self.cfg.r_min, self.cfg.s_max));
        Ok(self.observe())
    }

    pub fn observe(&self) -> Observation {
        observation(&self.ep, &self.scene, &self.bounds)
    }

    pub fn episode(&self) -> &EpisodeState {
        &self.ep
    }

    pub fn profile(&self) -> &GeoProfile {
        &self.profile
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn bounds(&self) -> &AdmissibleBounds {
        &self.bounds
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let target = self.scene.target;
        if self.ep.step == 0 {
            self.ep.path.frame = rotate_frame_about_tangent(&self.ep.path.frame, action.theta);
            if let Some(first) = self.ep.polyline.points.first_mut() {
                first.frame = self.ep.path.frame;
            }
        }
        let prev = self.ep.path;
        self.profile.push_knot(action.delta_s, action.kappa, action.tau)?;
        let (segment, next) = integrate_segment(&prev, &self.profile, self.profile.s_last(), self.cfg.sample_ds)?;
        let (obs_fraction, manuf_fraction) =
            segment_indicators(&segment, &self.scene, self.cfg.r_min, self.cfg.indicator_samples);
        let objective = objective_reward(
            &prev,
            &next,
            (obs_fraction, manuf_fraction),
            &target,
            &self.weights,
            self.cfg.s_max,
        );

        let l_prev = self.ep.l_align;
        let l_next = alignment_loss(&next, &target, self.cfg.s_max).total;
        self.ep.path = next;
        self.ep.polyline.extend_from(&segment);
        self.ep.step += 1;
        self.ep.l_align = l_next;

        let stage = progress_stage(&self.ep, &target, &self.weights, self.cfg.s_max);
        self.ep.stage = stage;
        let bonus = stage_bonus(&self.ep, l_prev, l_next, &self.weights);
        self.ep.bonus = bonus.flags;
        if stage != Stage::Done && self.ep.step >= self.cfg.max_steps {
            self.ep.stage = Stage::Failed;
        }

        Ok(StepOutcome {
            reward: objective.total + bonus.reward,
            objective,
            obs_fraction,
            manuf_fraction,
            stage_bonus: bonus.reward,
            align_reward: bonus.align,
            l_align: l_next,
            stage: self.ep.stage,
        })
    }

    /// Path with the straight lead-out to the target port; only valid once
    /// the episode is done.
    pub fn finalized_path(&self) -> Result<Polyline> {
        finalize_path(&self.ep, &self.scene.target, self.cfg.sample_ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::load_scene;
    use crate::Vec3;

    const STRAIGHT: &str = r#"
schema_version = 1
pipe_diameter = 25.0
[workspace]
min = [-100.0, -200.0, -200.0]
max = [400.0, 200.0, 200.0]
[[routes]]
name = "straight"
start = { position = [0.0, 0.0, 0.0], direction = [1.0, 0.0, 0.0] }
target = { position = [100.0, 0.0, 0.0], direction = [1.0, 0.0, 0.0] }
"#;

    fn straight_action(ds: f64) -> Action {
        Action { delta_s: ds, kappa: 0.0, tau: 0.0, theta: 0.0 }
    }

    #[test]
    fn straight_route_completes() {
        let scene = load_scene(STRAIGHT).unwrap();
        let mut env = RoutingEnv::new(scene, EnvConfig::default(), RewardWeights::default()).unwrap();
        let first = env.step(&straight_action(20.0)).unwrap();
        // 20 mm closer, already on the target line: stage machine runs to the end
        assert_eq!(first.stage, Stage::Done);
        assert!((first.stage_bonus - 20.0).abs() < 1e-12);
        let path = env.finalized_path().unwrap();
        assert_eq!(path.last().unwrap().r, Vec3::new(100.0, 0.0, 0.0));
        assert!((path.chord_length() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn budget_exhaustion_fails() {
        let far = STRAIGHT.replace("position = [100.0, 0.0, 0.0]", "position = [300.0, 0.0, 0.0]");
        let scene = load_scene(&far).unwrap();
        let cfg = EnvConfig { max_steps: 3, ..EnvConfig::default() };
        let mut env = RoutingEnv::new(scene, cfg, RewardWeights::default()).unwrap();
        let turn = Action { delta_s: 5.0, kappa: 0.01, tau: 0.0, theta: 1.0 };
        let mut last = None;
        for _ in 0..3 {
            last = Some(env.step(&turn).unwrap());
        }
        assert_eq!(last.unwrap().stage, Stage::Failed);
        assert_eq!(env.episode().step, 3);
        assert!((env.episode().path.s - 15.0).abs() < 1e-12);
    }

    #[test]
    fn reset_restores_start() {
        let scene = load_scene(STRAIGHT).unwrap();
        let mut env = RoutingEnv::new(scene, EnvConfig::default(), RewardWeights::default()).unwrap();
        let o0 = env.observe();
        env.step(&Action { delta_s: 7.0, kappa: 0.004, tau: 0.001, theta: 0.3 }).unwrap();
        assert_ne!(env.observe(), o0);
        assert_eq!(env.reset().unwrap(), o0);
        assert_eq!(env.profile().knots().len(), 1);
    }
}
