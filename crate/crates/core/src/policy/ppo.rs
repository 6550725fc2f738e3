//! Gaussian actor-critic and the clipped-surrogate update.
//!
//! During the update every stored observation is re-evaluated and the new
//! policy mean is shifted by `z ~ U(−α, α)` per dimension before the log
//! probability of the stored action is computed. With α = 0 this is plain
//! PPO.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Mlp, MlpCache};
use crate::env::Action;
use crate::scene::OBS_DIM;
use crate::{Error, Result};

pub const ACT_DIM: usize = 4;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub policy: Mlp,
    pub log_std: Vec<f64>,
    pub value: Mlp,
}

impl PolicyParams {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], act_dim: usize, init_log_std: f64, rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut v_sizes = sizes.clone();
        sizes.push(act_dim);
        v_sizes.push(1);
        let gain = 2f64.sqrt();
        Self {
            policy: Mlp::init(&sizes, gain, 0.01, rng),
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); act_dim],
            value: Mlp::init(&v_sizes, gain, 1.0, rng),
        }
    }

    /// Network shapes used by the router.
    pub fn router<R: Rng + ?Sized>(hidden: &[usize], init_log_std: f64, rng: &mut R) -> Self {
        Self::new(OBS_DIM, hidden, ACT_DIM, init_log_std, rng)
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn all_finite(&self) -> bool {
        self.policy.params().iter().chain(&self.log_std).chain(self.value.params()).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub value: f64,
}

pub fn policy_forward(params: &PolicyParams, obs: &[f64]) -> Result<PolicyOutput> {
    let mu = params.policy.forward(obs);
    let value = params.value.forward(obs)[0];
    let log_sigma: Vec<f64> = params.log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    if mu.iter().any(|v| !v.is_finite()) || !value.is_finite() {
        return Err(Error::NumericFault(format!("non-finite network output: mu {mu:?}, value {value}")));
    }
    Ok(PolicyOutput { mu, log_sigma, value })
}

/// Diagonal Gaussian log density.
pub fn log_prob(x: &[f64], mu: &[f64], log_sigma: &[f64]) -> f64 {
    x.iter()
        .zip(mu)
        .zip(log_sigma)
        .map(|((x, m), ls)| {
            let z = (x - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

pub fn sample_action<R: Rng + ?Sized>(mu: &[f64], log_sigma: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let raw: Vec<f64> = mu
        .iter()
        .zip(log_sigma)
        .map(|(m, ls)| {
            let z: f64 = StandardNormal.sample(rng);
            m + ls.exp() * z
        })
        .collect();
    let lp = log_prob(&raw, mu, log_sigma);
    (raw, lp)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub delta_s: (f64, f64),
    pub kappa: (f64, f64),
    pub tau: (f64, f64),
    pub theta: (f64, f64),
}

impl ActionBounds {
    pub fn new(r_min: f64, s_max: f64) -> Self {
        let b = crate::profile::admissible_bounds(r_min);
        Self {
            delta_s: (1.0f64.min(s_max), s_max),
            kappa: (0.0, b.kappa_relaxed_hi),
            tau: (b.tau_lo, b.tau_hi),
            theta: (-PI, PI),
        }
    }
}

fn affine(x: f64, (lo, hi): (f64, f64)) -> f64 {
    let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
    (lo + 0.5 * (x + 1.0) * (hi - lo)).clamp(lo, hi)
}

/// Clips each raw component to [−1, 1] and maps it onto its interval. The
/// frame roll only applies at step 0.
pub fn scale_action(raw: &[f64], bounds: &ActionBounds, step: usize) -> Action {
    Action {
        delta_s: affine(raw[0], bounds.delta_s),
        kappa: affine(raw[1], bounds.kappa),
        tau: affine(raw[2], bounds.tau),
        theta: if step == 0 { affine(raw[3], bounds.theta) } else { 0.0 },
    }
}

/// Generalized advantage estimates and λ-returns. `dones[t]` marks that the
/// episode ended after step `t`; `last_value` bootstraps the final step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::Domain("empty trajectory".into()));
    }
    if values.len() != n || dones.len() != n {
        return Err(Error::Domain("trajectory columns differ in length".into()));
    }
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 == n { last_value } else { values[t + 1] };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        gae = delta + gamma * lambda * live * gae;
        adv[t] = gae;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Per-sample clipped surrogate `min(ρA, clip(ρ, 1−ε, 1+ε)A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RLConfig {
    pub total_steps: u64,
    pub max_episode_steps: usize,
    /// Minibatch size.
    pub batch_size: usize,
    pub lr: f64,
    pub gamma: f64,
    pub clip: f64,
    pub noise_alpha: f64,
    pub s_max: f64,
    pub rollout_len: usize,
    pub gae_lambda: f64,
    pub update_epochs: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub grad_clip: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub seed: u64,
}

impl Default for RLConfig {
    fn default() -> Self {
        Self {
            total_steps: 4_000_000,
            max_episode_steps: 64,
            batch_size: 64,
            lr: 3e-4,
            gamma: 0.95,
            clip: 0.15,
            noise_alpha: 0.01,
            s_max: 20.0,
            rollout_len: 2048,
            gae_lambda: 0.95,
            update_epochs: 10,
            value_coef: 0.5,
            entropy_coef: 0.0,
            grad_clip: 0.5,
            hidden: vec![128, 128],
            init_log_std: -0.5,
            seed: 0,
        }
    }
}

impl RLConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.noise_alpha >= 0.0) {
            return bad("noise_alpha must be non-negative");
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.rollout_len == 0 || self.update_epochs == 0 || self.max_episode_steps == 0 {
            return bad("batch_size, rollout_len, update_epochs and max_episode_steps must be positive");
        }
        if !(self.lr > 0.0 && self.s_max > 0.0 && self.grad_clip > 0.0) {
            return bad("lr, s_max and grad_clip must be positive");
        }
        Ok(())
    }
}

/// Rollout data consumed by one update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

/// Parameters plus optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Learner {
    pub params: PolicyParams,
    opt_policy: Adam,
    opt_log_std: Adam,
    opt_value: Adam,
}

impl Learner {
    pub fn new(params: PolicyParams, lr: f64) -> Self {
        Self {
            opt_policy: Adam::new(params.policy.num_params(), lr),
            opt_log_std: Adam::new(params.log_std.len(), lr),
            opt_value: Adam::new(params.value.num_params(), lr),
            params,
        }
    }
}

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub policy: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(p: &PolicyParams) -> Self {
        Self {
            policy: vec![0.0; p.policy.num_params()],
            log_std: vec![0.0; p.log_std.len()],
            value: vec![0.0; p.value.num_params()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.policy.iter().chain(&self.log_std).chain(&self.value).map(|g| g * g).sum::<f64>().sqrt()
    }

    fn scale(&mut self, k: f64) {
        self.policy.iter_mut().chain(self.log_std.iter_mut()).chain(self.value.iter_mut()).for_each(|g| *g *= k);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MinibatchLoss {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss and gradient on one minibatch.
///
/// `advantages` are used as given (normalize beforehand); `noise[i]` is the
/// mean shift for sample `i`.
pub fn minibatch_loss_grad(
    params: &PolicyParams,
    batch: &Batch,
    idx: &[usize],
    advantages: &[f64],
    noise: &[Vec<f64>],
    cfg: &RLConfig,
) -> (MinibatchLoss, Gradient) {
    let mut grad = Gradient::zeros_like(params);
    let mut loss = MinibatchLoss::default();
    let inv = 1.0 / idx.len() as f64;
    let log_sigma: Vec<f64> = params.log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
    let sigma_inv: Vec<f64> = log_sigma.iter().map(|ls| (-ls).exp()).collect();
    let mut pcache = MlpCache::default();
    let mut vcache = MlpCache::default();
    let act_dim = params.act_dim();
    let mut d_mu = vec![0.0; act_dim];

    for (k, &i) in idx.iter().enumerate() {
        let obs = &batch.obs[i];
        let a = &batch.raw_actions[i];
        let adv = advantages[k];

        params.policy.forward_cached(obs, &mut pcache);
        let mu = pcache.output();
        let mut new_lp = 0.0;
        let mut zs = [0.0; 8];
        for d in 0..act_dim {
            let z = (a[d] - mu[d] - noise[k][d]) * sigma_inv[d];
            zs[d.min(7)] = z;
            new_lp += -0.5 * z * z - log_sigma[d] - HALF_LN_2PI;
        }
        let log_ratio = new_lp - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        loss.policy -= surr1.min(surr2) * inv;
        loss.approx_kl += ((ratio - 1.0) - log_ratio) * inv;
        if (ratio - 1.0).abs() > cfg.clip {
            loss.clip_fraction += inv;
        }
        // d(−min)/d(new_lp): the unclipped branch carries the gradient
        let g_lp = if surr1 <= surr2 { -adv * ratio * inv } else { 0.0 };
        if g_lp != 0.0 {
            for d in 0..act_dim {
                let z = if act_dim <= 8 { zs[d] } else { (a[d] - mu[d] - noise[k][d]) * sigma_inv[d] };
                d_mu[d] = g_lp * z * sigma_inv[d];
                if params.log_std[d] > LOG_STD_MIN && params.log_std[d] < LOG_STD_MAX {
                    grad.log_std[d] += g_lp * (z * z - 1.0);
                }
            }
            params.policy.backward(&pcache, &d_mu, &mut grad.policy);
        }

        params.value.forward_cached(obs, &mut vcache);
        let v = vcache.output()[0];
        let err = v - batch.returns[i];
        loss.value += cfg.value_coef * err * err * inv;
        params.value.backward(&vcache, &[cfg.value_coef * 2.0 * err * inv], &mut grad.value);
    }

    let entropy: f64 = log_sigma.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum();
    loss.entropy = entropy;
    if cfg.entropy_coef != 0.0 {
        for d in 0..act_dim {
            if params.log_std[d] > LOG_STD_MIN && params.log_std[d] < LOG_STD_MAX {
                grad.log_std[d] -= cfg.entropy_coef;
            }
        }
    }
    loss.total = loss.policy + loss.value - cfg.entropy_coef * entropy;
    (loss, grad)
}

/// Averages reported by one update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let std = var.sqrt();
    values.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}

fn run_update<R, N>(learner: &mut Learner, batch: &Batch, cfg: &RLConfig, rng: &mut R, mut noise: N) -> Result<UpdateStats>
where
    R: Rng + ?Sized,
    N: FnMut(&mut R, usize) -> Vec<f64>,
{
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let act_dim = learner.params.act_dim();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0usize;
    for epoch in 0..cfg.update_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let adv: Vec<f64> = normalized(&chunk.iter().map(|&i| batch.advantages[i]).collect::<Vec<_>>());
            let shifts: Vec<Vec<f64>> = (0..chunk.len()).map(|_| noise(rng, act_dim)).collect();
            let (loss, mut grad) = minibatch_loss_grad(&learner.params, batch, chunk, &adv, &shifts, cfg);
            if !loss.total.is_finite() {
                return Err(Error::NumericFault(format!(
                    "non-finite loss in epoch {epoch}: policy {}, value {}, log_std {:?}",
                    loss.policy, loss.value, learner.params.log_std
                )));
            }
            let norm = grad.norm();
            if !norm.is_finite() {
                return Err(Error::NumericFault(format!("non-finite gradient norm in epoch {epoch}")));
            }
            if norm > cfg.grad_clip {
                grad.scale(cfg.grad_clip / (norm + 1e-6));
            }
            learner.opt_policy.step(learner.params.policy.params_mut(), &grad.policy);
            learner.opt_log_std.step(&mut learner.params.log_std, &grad.log_std);
            learner.opt_value.step(learner.params.value.params_mut(), &grad.value);
            for ls in &mut learner.params.log_std {
                *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
            stats.policy_loss += loss.policy;
            stats.value_loss += loss.value;
            stats.entropy += loss.entropy;
            stats.approx_kl += loss.approx_kl;
            stats.clip_fraction += loss.clip_fraction;
            count += 1;
        }
    }
    let k = 1.0 / count as f64;
    stats.policy_loss *= k;
    stats.value_loss *= k;
    stats.entropy *= k;
    stats.approx_kl *= k;
    stats.clip_fraction *= k;
    if !learner.params.all_finite() {
        return Err(Error::NumericFault("parameters became non-finite".into()));
    }
    Ok(stats)
}

/// PPO update with uniform mean noise of amplitude `cfg.noise_alpha`.
pub fn ppo_update<R: Rng + ?Sized>(learner: &mut Learner, batch: &Batch, cfg: &RLConfig, rng: &mut R) -> Result<UpdateStats> {
    let alpha = cfg.noise_alpha;
    if alpha > 0.0 {
        run_update(learner, batch, cfg, rng, |rng, n| (0..n).map(|_| rng.random_range(-alpha..alpha)).collect())
    } else {
        run_update(learner, batch, cfg, rng, |_, n| vec![0.0; n])
    }
}

/// The same update with the mean shift fixed to zero.
pub fn vanilla_update<R: Rng + ?Sized>(learner: &mut Learner, batch: &Batch, cfg: &RLConfig, rng: &mut R) -> Result<UpdateStats> {
    run_update(learner, batch, cfg, rng, |_, n| vec![0.0; n])
}
