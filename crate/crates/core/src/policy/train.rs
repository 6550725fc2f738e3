//! Rollout collection and the outer training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ppo::{
    compute_gae, policy_forward, ppo_update, sample_action, scale_action, ActionBounds, Batch, Learner, PolicyParams,
    RLConfig, UpdateStats,
};
use crate::env::{EnvConfig, RoutingEnv};
use crate::frenet::Polyline;
use crate::machine::MachineConfig;
use crate::metrics::{layout_report, LayoutReport};
use crate::profile::Knot;
use crate::reward::{RewardWeights, Stage};
use crate::scene::Scene;
use crate::{Error, Result};

/// One environment step of a recorded episode.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub s: f64,
    pub delta_s: f64,
    pub kappa: f64,
    pub tau: f64,
    pub theta: f64,
    pub reward: f64,
    pub objective: f64,
    pub stage_bonus: f64,
    pub l_align: f64,
    pub stage: Stage,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode_return: f64,
    pub stage: Stage,
    /// Furthest stage reached before the episode ended.
    pub reached: Stage,
    pub trace: Vec<TraceRow>,
    pub knots: Vec<Knot>,
    /// Finalized path and its report; present only for done episodes.
    pub path: Option<(Polyline, LayoutReport)>,
    /// Raw (unfinalized) path.
    pub raw_path: Polyline,
    pub deterministic: bool,
}

impl EpisodeRecord {
    pub fn done(&self) -> bool {
        self.stage == Stage::Done
    }

    /// A done episode whose finalized path is collision free and manufacturable.
    pub fn clean(&self) -> bool {
        matches!(&self.path, Some((_, r)) if r.cfi && r.mvr == 0.0)
    }

    /// Sort key: done first, then clean, then return.
    fn better_than(&self, other: &EpisodeRecord) -> bool {
        let key = |e: &EpisodeRecord| (e.done(), e.clean());
        match key(self).cmp(&key(other)) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => self.episode_return > other.episode_return,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub update_idx: usize,
    pub global_step: u64,
    pub mean_return: f64,
    pub best_return: f64,
    pub frac_done: f64,
    pub frac_alignment_reached: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    /// Parameters of the update that produced the best episode.
    pub best_params: PolicyParams,
    pub final_params: PolicyParams,
    pub best_episode: Option<EpisodeRecord>,
    pub log: Vec<LogRow>,
    pub global_steps: u64,
}

impl TrainResult {
    pub fn found_done(&self) -> bool {
        self.best_episode.as_ref().is_some_and(|e| e.done())
    }
}

pub fn env_config(machine: &MachineConfig, rl: &RLConfig) -> EnvConfig {
    EnvConfig {
        r_min: machine.r_min,
        s_max: rl.s_max,
        max_steps: rl.max_episode_steps,
        sample_ds: machine.sample_ds,
        ..EnvConfig::default()
    }
}

/// Episode in progress inside a worker.
struct Running {
    env: RoutingEnv,
    obs: Vec<f64>,
    ret: f64,
    reached: Stage,
    trace: Vec<TraceRow>,
}

impl Running {
    fn new(env: RoutingEnv) -> Self {
        let obs = env.observe().as_slice().to_vec();
        Self { env, obs, ret: 0.0, reached: Stage::Startup, trace: Vec::new() }
    }
}

#[derive(Default)]
struct Rollout {
    obs: Vec<Vec<f64>>,
    raw_actions: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    last_value: f64,
    finished: Vec<EpisodeRecord>,
}

/// Advances the episode by one action and returns `(reward, terminal)`.
fn env_step(run: &mut Running, raw: &[f64], bounds: &ActionBounds) -> Result<(f64, bool)> {
    let step = run.env.episode().step;
    let action = scale_action(raw, bounds, step);
    let out = run.env.step(&action)?;
    let ep = run.env.episode();
    if out.stage != Stage::Failed {
        run.reached = run.reached.max(out.stage);
    }
    run.ret += out.reward;
    run.trace.push(TraceRow {
        step,
        s: ep.path.s,
        delta_s: action.delta_s,
        kappa: action.kappa,
        tau: action.tau,
        theta: action.theta,
        reward: out.reward,
        objective: out.objective.total,
        stage_bonus: out.stage_bonus,
        l_align: out.l_align,
        stage: out.stage,
        x: ep.path.r.x,
        y: ep.path.r.y,
        z: ep.path.r.z,
    });
    Ok((out.reward, out.terminal()))
}

/// Closes the running episode into a record and resets the environment.
fn finish(run: &mut Running, rl: &RLConfig, deterministic: bool) -> Result<EpisodeRecord> {
    let ep = run.env.episode();
    let path = if ep.stage == Stage::Done {
        let poly = run.env.finalized_path()?;
        let scene = run.env.scene();
        let report = layout_report(&poly, scene, run.env.config().r_min, &scene.target, rl.s_max);
        Some((poly, report))
    } else {
        None
    };
    let record = EpisodeRecord {
        episode_return: run.ret,
        stage: ep.stage,
        reached: run.reached,
        trace: std::mem::take(&mut run.trace),
        knots: run.env.profile().knots().to_vec(),
        path,
        raw_path: ep.polyline.clone(),
        deterministic,
    };
    run.obs = run.env.reset()?.as_slice().to_vec();
    run.ret = 0.0;
    run.reached = Stage::Startup;
    Ok(record)
}

fn collect(run: &mut Running, params: &PolicyParams, bounds: &ActionBounds, rl: &RLConfig, steps: usize, rng: &mut ChaCha8Rng) -> Result<Rollout> {
    let mut out = Rollout::default();
    for _ in 0..steps {
        let f = policy_forward(params, &run.obs)?;
        let (raw, lp) = sample_action(&f.mu, &f.log_sigma, rng);
        let obs = std::mem::take(&mut run.obs);
        let (reward, terminal) = env_step(run, &raw, bounds)?;
        out.obs.push(obs);
        out.raw_actions.push(raw);
        out.log_probs.push(lp);
        out.rewards.push(reward);
        out.values.push(f.value);
        out.dones.push(terminal);
        if terminal {
            out.finished.push(finish(run, rl, false)?);
        } else {
            run.obs = run.env.observe().as_slice().to_vec();
        }
    }
    out.last_value = policy_forward(params, &run.obs)?.value;
    Ok(out)
}

/// Runs one episode with the mean action.
pub fn run_deterministic(env: RoutingEnv, params: &PolicyParams, rl: &RLConfig) -> Result<EpisodeRecord> {
    let bounds = ActionBounds::new(env.config().r_min, rl.s_max);
    let mut run = Running::new(env);
    loop {
        let f = policy_forward(params, &run.obs)?;
        let (_, terminal) = env_step(&mut run, &f.mu, &bounds)?;
        if terminal {
            return finish(&mut run, rl, true);
        }
        run.obs = run.env.observe().as_slice().to_vec();
    }
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains a policy on `scene` and keeps the best episode seen.
///
/// Each of the `workers` rollout workers owns an environment and a private
/// random stream; results are merged in worker order, so a run is
/// reproducible for a fixed worker count.
pub fn train(
    scene: &Scene,
    machine: &MachineConfig,
    rl: &RLConfig,
    weights: &RewardWeights,
    seed: u64,
    workers: usize,
) -> Result<TrainResult> {
    rl.validate()?;
    machine.validate()?;
    weights.validate()?;
    if workers == 0 {
        return Err(Error::Config("at least one worker is required".into()));
    }
    let env_cfg = env_config(machine, rl);
    let bounds = ActionBounds::new(env_cfg.r_min, rl.s_max);
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0));
    let params = PolicyParams::router(&rl.hidden, rl.init_log_std, &mut init_rng);
    let mut learner = Learner::new(params, rl.lr);
    let mut update_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));

    let mut runs = Vec::with_capacity(workers);
    let mut rngs = Vec::with_capacity(workers);
    for w in 0..workers {
        runs.push(Running::new(RoutingEnv::new(scene.clone(), env_cfg, *weights)?));
        rngs.push(ChaCha8Rng::seed_from_u64(mix_seed(seed, 2 + w as u64)));
    }
    let per_worker = rl.rollout_len.div_ceil(workers);

    let mut best: Option<EpisodeRecord> = None;
    let mut best_params = learner.params.clone();
    let mut log = Vec::new();
    let mut global_step = 0u64;
    let mut update_idx = 0usize;

    while global_step < rl.total_steps {
        let remaining = (rl.total_steps - global_step).div_ceil(workers as u64) as usize;
        let steps = per_worker.min(remaining).max(1);
        let snapshot = &learner.params;
        let rollouts: Vec<Result<Rollout>> = if workers == 1 {
            vec![collect(&mut runs[0], snapshot, &bounds, rl, steps, &mut rngs[0])]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = runs
                    .iter_mut()
                    .zip(rngs.iter_mut())
                    .map(|(run, rng)| scope.spawn(move || collect(run, snapshot, &bounds, rl, steps, rng)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::State("rollout worker panicked".into()))))
                    .collect()
            })
        };

        let mut batch = Batch::default();
        let mut finished = Vec::new();
        for r in rollouts {
            let r = r?;
            let (adv, ret) = compute_gae(&r.rewards, &r.values, &r.dones, r.last_value, rl.gamma, rl.gae_lambda)?;
            global_step += r.rewards.len() as u64;
            batch.obs.extend(r.obs);
            batch.raw_actions.extend(r.raw_actions);
            batch.old_log_probs.extend(r.log_probs);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
            finished.extend(r.finished);
        }

        let n_fin = finished.len();
        let mean_return = if n_fin > 0 {
            finished.iter().map(|e| e.episode_return).sum::<f64>() / n_fin as f64
        } else {
            f64::NAN
        };
        let frac = |pred: &dyn Fn(&EpisodeRecord) -> bool| {
            if n_fin > 0 {
                finished.iter().filter(|e| pred(e)).count() as f64 / n_fin as f64
            } else {
                0.0
            }
        };
        let frac_done = frac(&|e| e.done());
        let frac_alignment = frac(&|e| e.reached >= Stage::Alignment);
        for ep in finished {
            if best.as_ref().is_none_or(|b| ep.better_than(b)) {
                best_params = learner.params.clone();
                best = Some(ep);
            }
        }

        let stats: UpdateStats = ppo_update(&mut learner, &batch, rl, &mut update_rng)?;

        let eval_env = RoutingEnv::new(scene.clone(), env_cfg, *weights)?;
        let eval = run_deterministic(eval_env, &learner.params, rl)?;
        if best.as_ref().is_none_or(|b| eval.better_than(b)) {
            best_params = learner.params.clone();
            best = Some(eval);
        }

        log.push(LogRow {
            update_idx,
            global_step,
            mean_return,
            best_return: best.as_ref().map_or(f64::NAN, |b| b.episode_return),
            frac_done,
            frac_alignment_reached: frac_alignment,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
        });
        update_idx += 1;
    }

    Ok(TrainResult {
        best_params,
        final_params: learner.params,
        best_episode: best,
        log,
        global_steps: global_step,
    })
}
