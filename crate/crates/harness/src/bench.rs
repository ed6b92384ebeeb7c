//! Throughput measurement of the batched environment, with and without
//! policy inference.

use std::time::Instant;

use reposer_core::physics::NUM_JOINTS;
use reposer_ppo::{ActMode, Agent};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::Result;
use crate::trainer::engine_env;

/// Throughput of the original GPU system, samples/s, for comparison.
pub const REFERENCE_GPU_SAMPLES_PER_SEC: f64 = 50_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub num_envs: usize,
    pub steps: usize,
    pub threads: usize,
    /// Environment stepping and observation only.
    pub env_steps_per_sec: f64,
    /// Full rollout: observation, policy and value inference, stepping.
    pub rollout_steps_per_sec: f64,
    pub reference_samples_per_sec: f64,
}

/// Step `num_envs` environments `steps` times per measurement.
pub fn benchmark(cfg: &EngineConfig, num_envs: usize, steps: usize) -> Result<BenchReport> {
    let mut c = cfg.clone();
    c.run.num_envs = num_envs;
    let mut env = engine_env(&c)?;
    let (da, dc) = (env.actor_dim(), env.critic_dim());
    let mut obs = ndarray::Array2::<f32>::zeros((num_envs, da));
    let mut crit = ndarray::Array2::<f32>::zeros((num_envs, dc));
    let actions: Vec<f32> = (0..num_envs * NUM_JOINTS).map(|i| ((i as f32) * 0.37).sin() * 0.5).collect();

    env.step(&actions)?;
    let t = Instant::now();
    for _ in 0..steps {
        env.actor_obs(obs.as_slice_mut().expect("standard layout"));
        env.step(&actions)?;
    }
    let env_rate = (num_envs * steps) as f64 / t.elapsed().as_secs_f64().max(1e-9);

    let agent = Agent::<f32>::new(&c.ppo.shapes(da, dc, NUM_JOINTS), c.ppo.init_std, c.run.seed);
    let t = Instant::now();
    for k in 0..steps {
        env.actor_obs(obs.as_slice_mut().expect("standard layout"));
        env.critic_obs(crit.as_slice_mut().expect("standard layout"));
        let out = agent.act(obs.view(), ActMode::Stochastic { seed: c.run.seed, counter: k as u64 })?;
        agent.value(crit.view())?;
        env.step(out.actions.as_slice().expect("standard layout"))?;
    }
    let rollout_rate = (num_envs * steps) as f64 / t.elapsed().as_secs_f64().max(1e-9);

    Ok(BenchReport {
        num_envs,
        steps,
        threads: rayon_threads(),
        env_steps_per_sec: env_rate,
        rollout_steps_per_sec: rollout_rate,
        reference_samples_per_sec: REFERENCE_GPU_SAMPLES_PER_SEC,
    })
}

fn rayon_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "throughput at N={} over {} steps ({} threads):", self.num_envs, self.steps, self.threads)?;
        writeln!(f, "  environment only:       {:>12.0} env-steps/s", self.env_steps_per_sec)?;
        writeln!(f, "  rollout with policy:    {:>12.0} env-steps/s", self.rollout_steps_per_sec)?;
        write!(f, "  reference (GPU system): >{:>11.0} samples/s", self.reference_samples_per_sec)
    }
}
