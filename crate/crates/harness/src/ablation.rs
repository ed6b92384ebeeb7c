//! The 2x2 observation/reward encoding ablation.

use std::path::Path;

use reposer_core::env::PoseEncoding;
use reposer_ppo::{Agent, Checkpoint, Learner};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::Result;
use crate::eval::{evaluate, EvalReport, EvalSpec};
use crate::report::sha256_hex;
use crate::trainer::{engine_env, engine_spec, IterationMetrics, TimingRecord, Trainer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub observations: Vec<PoseEncoding>,
    pub rewards: Vec<PoseEncoding>,
    pub dr: bool,
    pub seeds: Vec<u64>,
    /// Environment steps per arm; 0 evaluates the untrained policies.
    pub total_steps: u64,
}

impl AblationSpec {
    pub fn full_grid(cfg: &EngineConfig) -> Self {
        let both = vec![PoseEncoding::Keypoints, PoseEncoding::PosQuat];
        Self {
            observations: both.clone(),
            rewards: both,
            dr: cfg.dr.enabled,
            seeds: cfg.harness.seeds.clone(),
            total_steps: cfg.harness.ablation_steps,
        }
    }

    /// Every (observation, reward) pair, in a fixed order.
    pub fn arms(&self) -> Vec<(PoseEncoding, PoseEncoding)> {
        self.observations.iter().flat_map(|o| self.rewards.iter().map(move |r| (*o, *r))).collect()
    }
}

pub fn arm_name(observation: PoseEncoding, reward: PoseEncoding) -> String {
    format!("O-{}_R-{}", observation.short_name(), reward.short_name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: u64,
    pub global_step: u64,
    pub wall_secs: f64,
    pub success_rate: Option<f64>,
    pub position_success_rate: Option<f64>,
    pub orientation_success_rate: Option<f64>,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub observation: PoseEncoding,
    pub reward: PoseEncoding,
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub eval: Option<EvalReport>,
    /// Set when training diverged; the other arms still run.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub spec: AblationSpec,
    pub eval_seed: u64,
    pub arms: Vec<ArmResult>,
}

impl AblationReport {
    /// Mean end-of-episode orientation success of the evaluated arms whose
    /// reward uses `reward`.
    pub fn orientation_success(&self, reward: PoseEncoding) -> Option<f64> {
        let v: Vec<f64> = self
            .arms
            .iter()
            .filter(|a| a.reward == reward)
            .filter_map(|a| a.eval.as_ref().map(|e| e.orientation_success_rate))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Configuration of one ablation arm.
pub fn arm_config(base: &EngineConfig, spec: &AblationSpec, observation: PoseEncoding, reward: PoseEncoding, seed: u64) -> EngineConfig {
    let mut cfg = base.clone();
    cfg.task.observation = observation;
    cfg.task.reward = reward;
    cfg.dr.enabled = spec.dr;
    cfg.run.seed = seed;
    cfg.run.total_steps = spec.total_steps.max(1);
    cfg
}

/// Train and evaluate one arm. Training data goes to `out_dir` when given.
pub fn run_arm(base: &EngineConfig, spec: &AblationSpec, observation: PoseEncoding, reward: PoseEncoding, seed: u64, out_dir: Option<&Path>) -> Result<ArmResult> {
    let cfg = arm_config(base, spec, observation, reward, seed);
    let arm = arm_name(observation, reward);
    let mut result = ArmResult { arm, observation, reward, seed, curve: Vec::new(), eval: None, error: None };
    let env = engine_env(&cfg)?;
    let learner = if spec.total_steps == 0 {
        let shapes = cfg.ppo.shapes(env.actor_dim(), env.critic_dim(), reposer_core::physics::NUM_JOINTS);
        Learner::from_agent(cfg.ppo.clone(), Agent::new(&shapes, cfg.ppo.init_std, seed), seed)
    } else {
        let mut trainer = Trainer::new(env, engine_spec(&cfg, out_dir.map(Path::to_path_buf)))?;
        let mut timings: Vec<TimingRecord> = Vec::new();
        let mut metrics: Vec<IterationMetrics> = Vec::new();
        let outcome = trainer.run(None, |m, t| {
            metrics.push(m.clone());
            timings.push(t.clone());
        });
        result.curve = metrics
            .iter()
            .zip(&timings)
            .map(|(m, t)| CurvePoint {
                iteration: m.iteration,
                global_step: m.global_step,
                wall_secs: t.wall_secs,
                success_rate: m.success_rate,
                position_success_rate: m.position_success_rate,
                orientation_success_rate: m.orientation_success_rate,
                mean_reward: m.mean_reward,
            })
            .collect();
        if let Err(e) = outcome {
            result.error = Some(e.to_string());
            return Ok(result);
        }
        trainer.learner
    };
    let ckpt = Checkpoint::new(learner, 0, serde_json::Value::Null);
    let eval_spec = EvalSpec {
        physics: cfg.physics.clone(),
        task: cfg.task.clone(),
        dr: cfg.dr.clone(),
        trials: cfg.harness.eval_trials,
        seed: cfg.harness.eval_seed,
        confidence: cfg.harness.confidence,
        config_hash: cfg.hash(),
        checkpoint_hash: sha256_hex(&ckpt.to_bytes(false)?),
    };
    result.eval = Some(evaluate(&ckpt.learner.agent, &eval_spec, Default::default(), &result.arm)?);
    Ok(result)
}

/// Every arm for every seed; evaluation uses the shared evaluation seed so
/// all arms face the same goals and resets.
pub fn run_ablation(base: &EngineConfig, spec: &AblationSpec, out_dir: Option<&Path>, mut on_arm: impl FnMut(&ArmResult)) -> Result<AblationReport> {
    let mut arms = Vec::new();
    for (o, r) in spec.arms() {
        for &seed in &spec.seeds {
            let dir = out_dir.map(|d| d.join(arm_name(o, r)).join(format!("seed-{seed}")));
            let res = run_arm(base, spec, o, r, seed, dir.as_deref())?;
            on_arm(&res);
            arms.push(res);
        }
    }
    Ok(AblationReport { spec: spec.clone(), eval_seed: base.harness.eval_seed, arms })
}
