//! PPO with a Gaussian policy, written against plain `f64` slices.

pub mod mlp;
pub mod ppo;
pub mod train;

pub use mlp::{Adam, Mlp, MlpCache};
pub use ppo::{
    clipped_objective, compute_gae, log_prob, minibatch_loss_grad, policy_forward, ppo_update, sample_action,
    scale_action, vanilla_update, ActionBounds, Batch, Gradient, Learner, PolicyParams, RLConfig,
};
pub use train::{train, EpisodeRecord, LogRow, TrainResult};
