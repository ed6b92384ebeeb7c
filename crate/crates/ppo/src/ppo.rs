//! Hyperparameters, rollout storage and the clipped-surrogate update.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use reposer_core::rng::{stream, Purpose};
use serde::{Deserialize, Serialize};

use crate::error::{PpoError, Result};
use crate::gae::gae;
use crate::nn::{clip_global_norm, Adam};
use crate::policy::{policy_loss, value_loss, Agent, NetShapes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    /// GAE weighting between n-step estimates.
    pub tau: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Transitions per update, `num_envs * horizon`.
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub clip: f64,
    pub entropy_coef: f64,
    pub init_std: f64,
    /// Per-network gradient norm cap; 0 disables clipping.
    pub max_grad_norm: f64,
    /// Multiplier applied to rewards before advantage estimation.
    pub reward_scale: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.95,
            lr_start: 5e-4,
            lr_end: 1e-6,
            batch_size: 65536,
            minibatch_size: 16384,
            epochs: 8,
            clip: 0.2,
            entropy_coef: 0.0,
            init_std: 1.0,
            max_grad_norm: 1.0,
            reward_scale: 0.01,
            actor_hidden: vec![256, 256, 128, 128],
            critic_hidden: vec![512, 512, 256, 128],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PpoError::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("gamma {} and tau {} must lie in [0, 1]", self.gamma, self.tau));
        }
        if !(self.lr_start > 0.0 && self.lr_end >= 0.0 && self.lr_end <= self.lr_start) {
            return bad(format!("need 0 <= lr_end <= lr_start, lr_start > 0 (got {} -> {})", self.lr_start, self.lr_end));
        }
        if self.minibatch_size == 0 || self.batch_size == 0 || self.batch_size % self.minibatch_size != 0 {
            return bad(format!("minibatch {} must divide batch {}", self.minibatch_size, self.batch_size));
        }
        if self.epochs == 0 || !(self.clip > 0.0) || self.entropy_coef < 0.0 || !(self.init_std > 0.0) {
            return bad("epochs, clip and init_std must be positive, entropy_coef non-negative".into());
        }
        if self.max_grad_norm < 0.0 || !(self.reward_scale > 0.0) {
            return bad("max_grad_norm must be >= 0 and reward_scale > 0".into());
        }
        if self.actor_hidden.iter().chain(&self.critic_hidden).any(|h| *h == 0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }

    /// Rollout length per environment for `num_envs` parallel environments.
    pub fn horizon(&self, num_envs: usize) -> Result<usize> {
        if num_envs == 0 || self.batch_size % num_envs != 0 {
            return Err(PpoError::InvalidArgument(format!(
                "batch size {} is not a multiple of {num_envs} environments",
                self.batch_size
            )));
        }
        Ok(self.batch_size / num_envs)
    }

    pub fn shapes(&self, actor_obs: usize, critic_obs: usize, action: usize) -> NetShapes {
        NetShapes {
            actor_obs,
            critic_obs,
            action,
            actor_hidden: self.actor_hidden.clone(),
            critic_hidden: self.critic_hidden.clone(),
        }
    }
}

/// One rollout, time-major: row `t * num_envs + e` is step `t` of env `e`.
/// Observations are raw (unnormalized); values are in scaled-reward units.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub num_envs: usize,
    pub horizon: usize,
    pub actor_obs: Array2<f32>,
    pub critic_obs: Array2<f32>,
    /// Unclamped sampled actions.
    pub actions: Array2<f32>,
    pub log_probs: Vec<f32>,
    pub rewards: Vec<f32>,
    pub values: Vec<f32>,
    pub dones: Vec<bool>,
    /// Value of the state after the final step, per environment.
    pub bootstrap: Vec<f32>,
}

impl RolloutBatch {
    pub fn with_capacity(num_envs: usize, horizon: usize, actor_dim: usize, critic_dim: usize, action_dim: usize) -> Self {
        let n = num_envs * horizon;
        Self {
            num_envs,
            horizon,
            actor_obs: Array2::zeros((n, actor_dim)),
            critic_obs: Array2::zeros((n, critic_dim)),
            actions: Array2::zeros((n, action_dim)),
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            values: vec![0.0; n],
            dones: vec![false; n],
            bootstrap: vec![0.0; num_envs],
        }
    }

    pub fn len(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let ok = self.actor_obs.nrows() == n
            && self.critic_obs.nrows() == n
            && self.actions.nrows() == n
            && self.log_probs.len() == n
            && self.rewards.len() == n
            && self.values.len() == n
            && self.dones.len() == n
            && self.bootstrap.len() == self.num_envs;
        if !ok {
            return Err(PpoError::InvalidArgument("rollout batch arrays do not match num_envs * horizon".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    pub lr: f64,
    pub mean_advantage_raw: f64,
}

/// Agent plus optimizer state: everything the update mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub config: PpoConfig,
    pub agent: Agent<f32>,
    pub actor_opt: Adam<f32>,
    pub critic_opt: Adam<f32>,
    pub seed: u64,
    pub iteration: u64,
}

fn shapes_of(t: &[&[f32]]) -> Vec<usize> {
    t.iter().map(|s| s.len()).collect()
}

impl Learner {
    pub fn new(config: PpoConfig, actor_obs: usize, critic_obs: usize, action: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let agent = Agent::new(&config.shapes(actor_obs, critic_obs, action), config.init_std, seed);
        Ok(Self::from_agent(config, agent, seed))
    }

    pub fn from_agent(config: PpoConfig, agent: Agent<f32>, seed: u64) -> Self {
        let actor_opt = Adam::new(&shapes_of(&agent.actor.tensors()));
        let critic_opt = Adam::new(&shapes_of(&agent.critic.tensors()));
        Self { config, agent, actor_opt, critic_opt, seed, iteration: 0 }
    }

    /// Run `epochs` passes of shuffled minibatches over `batch` at learning
    /// rate `lr`, then fold the batch into the observation statistics. On a
    /// non-finite loss or gradient the learner is left exactly as it was.
    pub fn update(&mut self, batch: &RolloutBatch, lr: f64) -> Result<UpdateStats> {
        batch.validate()?;
        let cfg = self.config.clone();
        let n = batch.len();
        if n % cfg.minibatch_size != 0 {
            return Err(PpoError::InvalidArgument(format!("minibatch {} does not divide rollout of {n}", cfg.minibatch_size)));
        }
        let rewards: Vec<f64> = batch.rewards.iter().map(|r| *r as f64 * cfg.reward_scale).collect();
        let values: Vec<f64> = batch.values.iter().map(|v| *v as f64).collect();
        let bootstrap: Vec<f64> = batch.bootstrap.iter().map(|v| *v as f64).collect();
        let (adv, returns) = gae(&rewards, &values, &batch.dones, &bootstrap, cfg.gamma, cfg.tau)?;
        let mean = adv.iter().sum::<f64>() / n as f64;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let adv_n: Vec<f32> = adv.iter().map(|a| ((a - mean) / (std + 1e-8)) as f32).collect();
        let returns: Vec<f32> = returns.iter().map(|r| *r as f32).collect();

        let actor_x = self.agent.actor_norm.normalize(batch.actor_obs.view());
        let critic_x = self.agent.critic_norm.normalize(batch.critic_obs.view());

        let snapshot = self.clone();
        let mut stats = UpdateStats { lr, mean_advantage_raw: mean, ..UpdateStats::default() };
        let mut count = 0.0;
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut stream(self.seed, Purpose::Shuffle, self.iteration, epoch as u64));
            for (mb, idx) in order.chunks(cfg.minibatch_size).enumerate() {
                let fail = |what| PpoError::NonFinite { what, epoch, minibatch: mb };
                let ax = actor_x.select(Axis(0), idx);
                let cx = critic_x.select(Axis(0), idx);
                let act = batch.actions.select(Axis(0), idx);
                let old: Vec<f32> = idx.iter().map(|&i| batch.log_probs[i]).collect();
                let a: Vec<f32> = idx.iter().map(|&i| adv_n[i]).collect();
                let r: Vec<f32> = idx.iter().map(|&i| returns[i]).collect();

                let pl = policy_loss(&self.agent.actor, ax.view(), act.view(), &old, &a, cfg.clip as f32, cfg.entropy_coef as f32);
                let (vl, mut vgrad) = value_loss(&self.agent.critic, cx.view(), &r);
                let mut pgrad = pl.grad;
                if !pl.loss.is_finite() || !vl.is_finite() {
                    *self = snapshot;
                    return Err(fail("loss"));
                }
                let an = clip_global_norm(&mut pgrad.tensors_mut(), cfg.max_grad_norm as f32);
                let cn = clip_global_norm(&mut vgrad.tensors_mut(), cfg.max_grad_norm as f32);
                if !an.is_finite() || !cn.is_finite() {
                    *self = snapshot;
                    return Err(fail("gradient"));
                }
                self.actor_opt.apply(&mut self.agent.actor.tensors_mut(), &pgrad.tensors(), lr);
                self.agent.actor.clamp_log_std();
                self.critic_opt.apply(&mut self.agent.critic.tensors_mut(), &vgrad.tensors(), lr);

                stats.policy_loss += pl.loss as f64;
                stats.value_loss += vl as f64;
                stats.approx_kl += pl.approx_kl as f64;
                stats.clip_fraction += pl.clip_fraction as f64;
                stats.entropy += pl.entropy as f64;
                stats.actor_grad_norm += an as f64;
                stats.critic_grad_norm += cn as f64;
                count += 1.0;
            }
        }
        for v in [
            &mut stats.policy_loss,
            &mut stats.value_loss,
            &mut stats.approx_kl,
            &mut stats.clip_fraction,
            &mut stats.entropy,
            &mut stats.actor_grad_norm,
            &mut stats.critic_grad_norm,
        ] {
            *v /= count;
        }
        self.agent.actor_norm.update(batch.actor_obs.view());
        self.agent.critic_norm.update(batch.critic_obs.view());
        self.iteration += 1;
        Ok(stats)
    }
}
