//! Learning check on the planar reach task: PPO against a scripted
//! damped-least-squares controller.

use std::time::Instant;

use reposer_ppo::{ActMode, Agent, PpoConfig};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::task::{BatchTask, ReachConfig, ReachTask};
use crate::trainer::{IterationMetrics, TrainSpec, Trainer};

pub const NUM_ENVS: usize = 256;
pub const EVAL_ENVS: usize = 512;
pub const EVAL_SEED: u64 = 99;
pub const TOTAL_STEPS: u64 = 1_200_000;

pub fn reach_spec(seed: u64, total_steps: u64) -> TrainSpec {
    TrainSpec {
        ppo: PpoConfig {
            batch_size: 8192,
            minibatch_size: 2048,
            epochs: 5,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            reward_scale: 1.0,
            gamma: 0.95,
            lr_start: 1e-3,
            init_std: 0.6,
            ..PpoConfig::default()
        },
        seed,
        total_steps,
        checkpoint_interval: u64::MAX,
        out_dir: None,
        thresholds: None,
        extra: serde_json::Value::Null,
    }
}

/// Mean return of one full episode per environment.
fn episode_return(task: &mut ReachTask, mut policy: impl FnMut(&ReachTask) -> Result<Vec<f32>>) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for _ in 0..task.config.episode_length {
        let a = policy(task)?;
        for e in task.step(&a)?.episodes {
            total += e.episode_return;
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

pub fn oracle_return() -> Result<f64> {
    let mut task = ReachTask::new(ReachConfig::default(), EVAL_ENVS, EVAL_SEED);
    episode_return(&mut task, |t| Ok(t.oracle_actions()))
}

/// Deterministic-action return on the evaluation episodes.
pub fn policy_return(agent: &Agent<f32>) -> Result<f64> {
    let mut task = ReachTask::new(ReachConfig::default(), EVAL_ENVS, EVAL_SEED);
    let dim = task.actor_dim();
    let mut obs = ndarray::Array2::<f32>::zeros((EVAL_ENVS, dim));
    episode_return(&mut task, |t| {
        t.actor_obs(obs.as_slice_mut().expect("standard layout"));
        Ok(agent.act(obs.view(), ActMode::Deterministic)?.actions.iter().copied().collect())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachResult {
    pub oracle_return: f64,
    pub policy_return: f64,
    pub ratio: f64,
    pub wall_secs: f64,
    pub metrics: Vec<IterationMetrics>,
}

pub fn train_reach(seed: u64, total_steps: u64) -> Result<(ReachResult, Agent<f32>)> {
    let start = Instant::now();
    let mut trainer = Trainer::new(ReachTask::new(ReachConfig::default(), NUM_ENVS, seed), reach_spec(seed, total_steps))?;
    let mut metrics = Vec::new();
    trainer.run(None, |m, _| metrics.push(m.clone()))?;
    let wall_secs = start.elapsed().as_secs_f64();
    let oracle = oracle_return()?;
    let policy = policy_return(&trainer.learner.agent)?;
    Ok((ReachResult { oracle_return: oracle, policy_return: policy, ratio: policy / oracle, wall_secs, metrics }, trainer.learner.agent))
}
