//! Stage machine and reward decomposition.
//!
//! An episode moves through Startup → Navigation → Alignment → Shooting →
//! Done, or ends in Failed when the step budget runs out. The per-step reward
//! is a dense objective term plus a stage bonus that is active from the
//! alignment stage on.

use serde::{Deserialize, Serialize};

use crate::frenet::{Frame, PathState, Polyline, Sample};
use crate::scene::Port;
use crate::{Error, Result, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Startup,
    Navigation,
    Alignment,
    Shooting,
    Done,
    Failed,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Startup => "startup",
            Stage::Navigation => "navigation",
            Stage::Alignment => "alignment",
            Stage::Shooting => "shooting",
            Stage::Done => "done",
            Stage::Failed => "failed",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Stage::Done | Stage::Failed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    pub r_bonus: f64,
    pub w_align: f64,
    pub w_shoot: f64,
    /// Distance to the target port that starts the alignment stage, mm.
    pub eps_align: f64,
    pub eps_shoot: f64,
    pub eps_final: f64,
    /// Divide the length penalty by s_max.
    pub len_normalized: bool,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w1: 0.0875,
            w2: 0.005,
            w3: 2.5,
            w4: 1.0,
            w5: 1.0,
            r_bonus: 10.0,
            w_align: 20.0,
            w_shoot: 50.0,
            eps_align: 200.0,
            eps_shoot: 0.1,
            eps_final: 0.05,
            len_normalized: true,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w1, self.w2, self.w3, self.w4, self.w5, self.r_bonus, self.w_align, self.w_shoot,
            self.eps_align, self.eps_shoot, self.eps_final,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        if !(self.eps_final < self.eps_shoot) {
            return Err(Error::Config("eps_final must be below eps_shoot".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BonusFlags {
    pub alignment: bool,
    pub shooting: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeState {
    pub path: PathState,
    pub stage: Stage,
    pub step: usize,
    pub polyline: Polyline,
    pub bonus: BonusFlags,
    /// Alignment loss at the current path state.
    pub l_align: f64,
}

impl EpisodeState {
    pub fn new(path: PathState) -> Self {
        Self {
            path,
            stage: Stage::Startup,
            step: 0,
            polyline: Polyline::new(vec![path.sample()]),
            bonus: BonusFlags::default(),
            l_align: f64::NAN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentLoss {
    pub total: f64,
    pub angle: f64,
    pub dist: f64,
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(-1.0, 1.0).acos()
}

/// Normalized angular deviation and perpendicular offset of the path end
/// relative to the target port line, and their mean.
pub fn alignment_loss(state: &PathState, target: &Port, s_max: f64) -> AlignmentLoss {
    let angle = angle_between(&state.frame.t, &target.direction) / std::f64::consts::PI;
    let offset = (state.r - target.position).cross(&target.direction).norm();
    let dist = offset / (s_max * target.direction.norm());
    AlignmentLoss { total: 0.5 * (angle + dist), angle, dist }
}

/// Unweighted objective components and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveParts {
    pub dist: f64,
    pub angle: f64,
    pub len: f64,
    pub obs: f64,
    pub manuf: f64,
    pub total: f64,
}

pub fn objective_reward(
    prev: &PathState,
    next: &PathState,
    indicators: (f64, f64),
    target: &Port,
    w: &RewardWeights,
    s_max: f64,
) -> ObjectiveParts {
    let dist = (prev.r - target.position).norm() - (next.r - target.position).norm();
    let angle = angle_between(&prev.frame.t, &target.direction) - angle_between(&next.frame.t, &target.direction);
    let ds = next.s - prev.s;
    let len = if w.len_normalized { -ds / s_max } else { -ds };
    let obs = -indicators.0;
    let manuf = -indicators.1;
    let total = w.w1 * dist + w.w2 * angle + w.w3 * len + w.w4 * obs + w.w5 * manuf;
    ObjectiveParts { dist, angle, len, obs, manuf, total }
}

/// Stage reached after the latest action, ignoring the step budget.
/// Thresholds are checked in order, so one action can pass several stages.
pub fn progress_stage(ep: &EpisodeState, target: &Port, w: &RewardWeights, s_max: f64) -> Stage {
    let mut stage = ep.stage;
    if stage.is_terminal() {
        return stage;
    }
    if stage == Stage::Startup && ep.step >= 1 {
        stage = Stage::Navigation;
    }
    let loss = alignment_loss(&ep.path, target, s_max).total;
    if stage == Stage::Navigation && (ep.path.r - target.position).norm() < w.eps_align {
        stage = Stage::Alignment;
    }
    if stage == Stage::Alignment && loss < w.eps_shoot {
        stage = Stage::Shooting;
    }
    if stage == Stage::Shooting && loss < w.eps_final {
        stage = Stage::Done;
    }
    stage
}

/// Next stage, including failure once `max_steps` actions were taken without
/// finishing.
pub fn stage_transition(ep: &EpisodeState, target: &Port, w: &RewardWeights, s_max: f64, max_steps: usize) -> Stage {
    let stage = progress_stage(ep, target, w, s_max);
    if stage != Stage::Done && ep.step >= max_steps {
        Stage::Failed
    } else {
        stage
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageBonus {
    pub reward: f64,
    /// Weighted alignment improvement, without the one-time bonuses.
    pub align: f64,
    pub flags: BonusFlags,
}

/// Stage bonus for a step that ended in `ep.stage`: the one-time entry bonus
/// for every stage reached for the first time plus the weighted reduction of
/// the alignment loss.
pub fn stage_bonus(ep: &EpisodeState, l_prev: f64, l_next: f64, w: &RewardWeights) -> StageBonus {
    let mut flags = ep.bonus;
    let weight = match ep.stage {
        Stage::Alignment => w.w_align,
        Stage::Shooting | Stage::Done => w.w_shoot,
        _ => return StageBonus { reward: 0.0, align: 0.0, flags },
    };
    let mut reward = 0.0;
    if !flags.alignment {
        flags.alignment = true;
        reward += w.r_bonus;
    }
    if ep.stage >= Stage::Shooting && !flags.shooting {
        flags.shooting = true;
        reward += w.r_bonus;
    }
    let align = weight * (l_prev - l_next);
    StageBonus { reward: reward + align, align, flags }
}

/// Straight extension from the path end along the target direction to the
/// point closest to the target, with the terminus snapped onto the target.
pub fn finalize_path(ep: &EpisodeState, target: &Port, sample_ds: f64) -> Result<Polyline> {
    if ep.stage != Stage::Done {
        return Err(Error::State(format!(
            "cannot finalize an episode in stage {}",
            ep.stage.as_str()
        )));
    }
    let mut out = ep.polyline.clone();
    let Some(end) = out.last().copied() else {
        return Err(Error::State("episode has no path".into()));
    };
    if (end.r - target.position).norm() < 1e-9 {
        return Ok(out);
    }
    let dir = target.direction.normalize();
    let frame = Frame::new(dir, end.frame.n).or_else(|_| Frame::from_tangent(dir))?;
    let along = (target.position - end.r).dot(&dir);
    let straight = |s: f64, r: Vec3| Sample { s, r, frame, kappa: 0.0, tau: 0.0 };
    if along > 1e-9 {
        let n = (along / sample_ds * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        for i in 1..=n {
            let u = (i as f64 * sample_ds).min(along);
            out.points.push(straight(end.s + u, end.r + dir * u));
        }
    } else {
        let gap = (target.position - end.r).norm();
        out.points.push(straight(end.s + gap, end.r));
    }
    let last = out.points.last_mut().expect("extension added a point");
    last.r = target.position;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn port(p: Vec3, d: Vec3) -> Port {
        Port { position: p, direction: d }
    }

    fn state(r: Vec3, t: Vec3, s: f64) -> PathState {
        PathState { r, frame: Frame::from_tangent(t).unwrap(), s, kappa: 0.0, tau: 0.0 }
    }

    #[test]
    fn alignment_loss_cases() {
        let tgt = port(Vec3::zeros(), Vec3::x());
        let l = alignment_loss(&state(Vec3::new(-30.0, 0.0, 0.0), Vec3::x(), 0.0), &tgt, 20.0);
        assert_eq!((l.total, l.angle, l.dist), (0.0, 0.0, 0.0));
        let l = alignment_loss(&state(Vec3::zeros(), Vec3::x(), 0.0), &port(Vec3::zeros(), Vec3::y()), 20.0);
        assert!((l.angle - 0.5).abs() < 1e-15);
        let l = alignment_loss(&state(Vec3::new(0.0, 10.0, 0.0), Vec3::x(), 0.0), &tgt, 20.0);
        assert!((l.dist - 0.5).abs() < 1e-15);
    }

    #[test]
    fn objective_cases() {
        let w = RewardWeights::default();
        let tgt = port(Vec3::new(0.0, 1000.0, 0.0), Vec3::x());
        // sideways move: distance to target barely changes
        let a = state(Vec3::new(-10.0, 0.0, 0.0), Vec3::x(), 0.0);
        let b = state(Vec3::new(10.0, 0.0, 0.0), Vec3::x(), 20.0);
        let r = objective_reward(&a, &b, (0.0, 0.0), &tgt, &w, 20.0);
        assert!((r.total + 2.5).abs() < 1e-12);

        let tgt = port(Vec3::new(100.0, 0.0, 0.0), Vec3::x());
        let a = state(Vec3::zeros(), Vec3::x(), 0.0);
        let b = state(Vec3::new(20.0, 0.0, 0.0), Vec3::x(), 20.0);
        let r = objective_reward(&a, &b, (0.0, 0.0), &tgt, &w, 20.0);
        assert!((r.total + 0.75).abs() < 1e-12);
        let bad = objective_reward(&a, &b, (1.0, 1.0), &tgt, &w, 20.0);
        assert!((bad.total - r.total + 2.0).abs() < 1e-12);

        let literal = RewardWeights { len_normalized: false, ..w };
        let r = objective_reward(&a, &b, (0.0, 0.0), &tgt, &literal, 20.0);
        assert!((r.len + 20.0).abs() < 1e-15);
    }

    #[test]
    fn transitions() {
        let w = RewardWeights::default();
        let tgt = port(Vec3::zeros(), Vec3::x());
        let mut ep = EpisodeState::new(state(Vec3::new(0.0, 600.0, 0.0), Vec3::y(), 0.0));
        assert_eq!(stage_transition(&ep, &tgt, &w, 20.0, 64), Stage::Startup);
        ep.step = 1;
        assert_eq!(stage_transition(&ep, &tgt, &w, 20.0, 64), Stage::Navigation);
        ep.stage = Stage::Navigation;
        ep.path = state(Vec3::new(0.0, 150.0, 0.0), Vec3::y(), 0.0);
        assert_eq!(stage_transition(&ep, &tgt, &w, 20.0, 64), Stage::Alignment);

        // l_align = 0.08: angle 0, offset 3.2 mm
        ep.stage = Stage::Alignment;
        ep.path = state(Vec3::new(-50.0, 3.2, 0.0), Vec3::x(), 0.0);
        assert_eq!(stage_transition(&ep, &tgt, &w, 20.0, 64), Stage::Shooting);

        ep.stage = Stage::Navigation;
        ep.path = state(Vec3::new(0.0, 400.0, 0.0), Vec3::y(), 0.0);
        ep.step = 64;
        assert_eq!(stage_transition(&ep, &tgt, &w, 20.0, 64), Stage::Failed);
    }

    #[test]
    fn bonus_cases() {
        let w = RewardWeights::default();
        let mut ep = EpisodeState::new(state(Vec3::zeros(), Vec3::x(), 0.0));
        ep.stage = Stage::Alignment;
        let b = stage_bonus(&ep, 0.30, 0.25, &w);
        assert!((b.reward - 11.0).abs() < 1e-12);
        ep.bonus = b.flags;
        assert_eq!(stage_bonus(&ep, 0.25, 0.25, &w).reward, 0.0);
        ep.stage = Stage::Shooting;
        ep.bonus.shooting = true;
        assert!((stage_bonus(&ep, 0.09, 0.06, &w).reward - 1.5).abs() < 1e-12);
        ep.stage = Stage::Navigation;
        assert_eq!(stage_bonus(&ep, 0.9, 0.1, &w).reward, 0.0);
    }

    fn done_episode(end: Vec3, t: Vec3) -> EpisodeState {
        let mut ep = EpisodeState::new(state(end, t, 0.0));
        ep.stage = Stage::Done;
        ep
    }

    #[test]
    fn finalize_cases() {
        let tgt = port(Vec3::new(100.0, 0.0, 0.0), Vec3::x());
        let ep = done_episode(tgt.position, Vec3::x());
        assert_eq!(finalize_path(&ep, &tgt, 1.0).unwrap(), ep.polyline);

        let ep = done_episode(Vec3::new(95.0, 0.0, 0.0), Vec3::x());
        let p = finalize_path(&ep, &tgt, 1.0).unwrap();
        assert_eq!(p.len(), 6);
        assert!((p.chord_length() - 5.0).abs() < 1e-12);

        let ep = done_episode(Vec3::new(90.0, 0.8, 0.0), Vec3::x());
        let p = finalize_path(&ep, &tgt, 1.0).unwrap();
        let n = p.len();
        let closest = Vec3::new(100.0, 0.8, 0.0);
        assert!((p.points[n - 2].r - Vec3::new(99.0, 0.8, 0.0)).norm() < 1e-12);
        assert!((closest - p.points[n - 1].r).norm() <= 0.8 + 1e-12);
        assert_eq!(p.points[n - 1].r, tgt.position);

        let mut ep = done_episode(Vec3::zeros(), Vec3::x());
        ep.stage = Stage::Shooting;
        assert!(matches!(finalize_path(&ep, &tgt, 1.0), Err(Error::State(_))));
    }
}
