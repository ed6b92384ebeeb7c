//! Batched tasks the trainer can drive: the cube reposing environment and a
//! small planar fingertip-reach task used to check that learning works.

use reposer_core::env::{EpisodeRecord, ReposeEnv, WeightedReward};
use reposer_core::physics::NUM_JOINTS;
use reposer_core::rng::{stream, Purpose};
use reposer_core::spatial::{logistic_kernel, KernelParams};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default)]
pub struct TaskStep {
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub faults: Vec<bool>,
    /// Weighted reward terms per environment, when the task has them.
    pub terms: Vec<WeightedReward>,
    pub episodes: Vec<EpisodeRecord>,
}

pub trait BatchTask: Send {
    fn num_envs(&self) -> usize;
    fn actor_dim(&self) -> usize;
    fn critic_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn actor_obs(&self, out: &mut [f32]);
    fn critic_obs(&self, out: &mut [f32]);
    fn step(&mut self, actions: &[f32]) -> Result<TaskStep>;
    fn save_state(&self) -> Result<serde_json::Value>;
    fn load_state(&mut self, state: serde_json::Value) -> Result<()>;
}

impl BatchTask for ReposeEnv {
    fn num_envs(&self) -> usize {
        ReposeEnv::num_envs(self)
    }

    fn actor_dim(&self) -> usize {
        ReposeEnv::actor_dim(self)
    }

    fn critic_dim(&self) -> usize {
        ReposeEnv::critic_dim(self)
    }

    fn action_dim(&self) -> usize {
        NUM_JOINTS
    }

    fn actor_obs(&self, out: &mut [f32]) {
        ReposeEnv::actor_obs(self, out)
    }

    fn critic_obs(&self, out: &mut [f32]) {
        ReposeEnv::critic_obs(self, out)
    }

    fn step(&mut self, actions: &[f32]) -> Result<TaskStep> {
        let out = ReposeEnv::step(self, actions)?;
        let terms = out.components.iter().map(|c| c.weighted(&self.task)).collect();
        Ok(TaskStep { rewards: out.rewards, dones: out.dones, faults: out.faults, terms, episodes: out.episodes })
    }

    fn save_state(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    fn load_state(&mut self, state: serde_json::Value) -> Result<()> {
        let restored: ReposeEnv = serde_json::from_value(state)?;
        if restored.num_envs() != self.num_envs() || restored.task != self.task || restored.physics != self.physics || restored.dr != self.dr {
            return Err(HarnessError::Incompatible("saved environment state does not match the configuration".into()));
        }
        *self = restored;
        Ok(())
    }
}

/// Planar two-link arm whose fingertip must reach a goal point. Actions are
/// joint-angle increments; reward is the logistic kernel of the fingertip to
/// goal distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachConfig {
    pub link_lengths: [f64; 2],
    /// Joint increment at action magnitude 1, rad.
    pub max_step: f64,
    pub episode_length: u32,
    pub kernel: KernelParams,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self { link_lengths: [0.16, 0.16], max_step: 0.15, episode_length: 50, kernel: KernelParams::KEYPOINTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReachSlot {
    q: [f64; 2],
    goal: [f64; 2],
    step: u32,
    episode: u64,
    episode_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachTask {
    pub config: ReachConfig,
    pub seed: u64,
    slots: Vec<ReachSlot>,
}

pub const REACH_OBS_DIM: usize = 9;

impl ReachTask {
    pub fn new(config: ReachConfig, num_envs: usize, seed: u64) -> Self {
        let slots = (0..num_envs).map(|i| Self::fresh(&config, seed, i, 0)).collect();
        Self { config, seed, slots }
    }

    fn fresh(config: &ReachConfig, seed: u64, env: usize, episode: u64) -> ReachSlot {
        let mut rng = stream(seed, Purpose::Reset, env as u64, episode);
        let q = [rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI), rng.gen_range(-2.5..2.5)];
        let mut g = stream(seed, Purpose::Goal, env as u64, episode);
        let [l1, l2] = config.link_lengths;
        // Goals stay clear of the elbow limit and of full extension.
        let (r_min, r_max) = ((l1 - l2).abs() + 0.3 * l1.min(l2) + 0.03, l1 + l2 - 0.03);
        let r = g.gen_range(r_min..r_max);
        let theta = g.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        ReachSlot { q, goal: [r * theta.cos(), r * theta.sin()], step: 0, episode, episode_return: 0.0 }
    }

    pub fn tip(&self, q: &[f64; 2]) -> [f64; 2] {
        let [l1, l2] = self.config.link_lengths;
        [l1 * q[0].cos() + l2 * (q[0] + q[1]).cos(), l1 * q[0].sin() + l2 * (q[0] + q[1]).sin()]
    }

    fn distance(&self, s: &ReachSlot) -> f64 {
        let t = self.tip(&s.q);
        ((t[0] - s.goal[0]).powi(2) + (t[1] - s.goal[1]).powi(2)).sqrt()
    }

    fn obs_into(&self, out: &mut [f32]) {
        let reach = self.config.link_lengths[0] + self.config.link_lengths[1];
        for (o, s) in out.chunks_mut(REACH_OBS_DIM).zip(&self.slots) {
            let t = self.tip(&s.q);
            let v = [
                s.q[0].sin(),
                s.q[0].cos(),
                s.q[1] / std::f64::consts::PI,
                t[0] / reach,
                t[1] / reach,
                s.goal[0] / reach,
                s.goal[1] / reach,
                (s.goal[0] - t[0]) / reach * 5.0,
                (s.goal[1] - t[1]) / reach * 5.0,
            ];
            for (d, x) in o.iter_mut().zip(v) {
                *d = x as f32;
            }
        }
    }

    /// Scripted controller: damped least-squares step toward the goal,
    /// limited to the action bound. Returns actions in `[-1, 1]`.
    pub fn oracle_actions(&self) -> Vec<f32> {
        let [l1, l2] = self.config.link_lengths;
        let mut out = Vec::with_capacity(2 * self.slots.len());
        for s in &self.slots {
            let t = self.tip(&s.q);
            let e = [s.goal[0] - t[0], s.goal[1] - t[1]];
            let (s1, c1) = s.q[0].sin_cos();
            let (s12, c12) = (s.q[0] + s.q[1]).sin_cos();
            let j = [[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]];
            // dq = J^T (J J^T + lambda I)^-1 e
            let lambda = 1e-4;
            let a = j[0][0] * j[0][0] + j[0][1] * j[0][1] + lambda;
            let b = j[0][0] * j[1][0] + j[0][1] * j[1][1];
            let d = j[1][0] * j[1][0] + j[1][1] * j[1][1] + lambda;
            let det = a * d - b * b;
            let y = [(d * e[0] - b * e[1]) / det, (a * e[1] - b * e[0]) / det];
            let dq = [j[0][0] * y[0] + j[1][0] * y[1], j[0][1] * y[0] + j[1][1] * y[1]];
            let m = dq[0].abs().max(dq[1].abs());
            let scale = if m > self.config.max_step { self.config.max_step / m } else { 1.0 };
            out.push((dq[0] * scale / self.config.max_step) as f32);
            out.push((dq[1] * scale / self.config.max_step) as f32);
        }
        out
    }
}

impl BatchTask for ReachTask {
    fn num_envs(&self) -> usize {
        self.slots.len()
    }

    fn actor_dim(&self) -> usize {
        REACH_OBS_DIM
    }

    fn critic_dim(&self) -> usize {
        REACH_OBS_DIM
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn actor_obs(&self, out: &mut [f32]) {
        self.obs_into(out)
    }

    fn critic_obs(&self, out: &mut [f32]) {
        self.obs_into(out)
    }

    fn step(&mut self, actions: &[f32]) -> Result<TaskStep> {
        let n = self.slots.len();
        if actions.len() != 2 * n {
            return Err(HarnessError::Runtime(format!("expected {} actions, got {}", 2 * n, actions.len())));
        }
        let mut out = TaskStep::default();
        for i in 0..n {
            let a = [actions[2 * i] as f64, actions[2 * i + 1] as f64];
            let fault = !a.iter().all(|v| v.is_finite());
            let s = &mut self.slots[i];
            if !fault {
                s.q[0] += a[0].clamp(-1.0, 1.0) * self.config.max_step;
                s.q[1] = (s.q[1] + a[1].clamp(-1.0, 1.0) * self.config.max_step).clamp(-2.8, 2.8);
            }
            let s = self.slots[i].clone();
            let dist = self.distance(&s);
            let reward = logistic_kernel(dist, &self.config.kernel);
            let s = &mut self.slots[i];
            s.step += 1;
            s.episode_return += reward;
            let done = s.step >= self.config.episode_length;
            if done {
                out.episodes.push(EpisodeRecord {
                    episode: s.episode,
                    env_id: i,
                    success: dist < 0.02,
                    success_any: false,
                    final_pos_err: dist,
                    final_rot_err: 0.0,
                    episode_return: s.episode_return,
                });
                let next = s.episode + 1;
                *s = Self::fresh(&self.config, self.seed, i, next);
            }
            out.rewards.push(reward);
            out.dones.push(done);
            out.faults.push(fault);
        }
        Ok(out)
    }

    fn save_state(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    fn load_state(&mut self, state: serde_json::Value) -> Result<()> {
        *self = serde_json::from_value(state)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_reaches_goals() {
        let mut t = ReachTask::new(ReachConfig::default(), 64, 3);
        let mut last = None;
        for _ in 0..t.config.episode_length {
            let a = t.oracle_actions();
            let out = t.step(&a).unwrap();
            if !out.episodes.is_empty() {
                last = Some(out.episodes);
            }
        }
        let eps = last.unwrap();
        assert_eq!(eps.len(), 64);
        assert!(eps.iter().all(|e| e.final_pos_err < 1e-3));
    }

    #[test]
    fn state_round_trip() {
        let mut t = ReachTask::new(ReachConfig::default(), 4, 1);
        t.step(&[0.5; 8]).unwrap();
        let s = t.save_state().unwrap();
        let mut u = ReachTask::new(ReachConfig::default(), 4, 9);
        u.load_state(s).unwrap();
        assert_eq!(t, u);
    }
}
