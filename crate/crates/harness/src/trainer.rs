//! PPO training loop with periodic checkpoints and exact resume.
//!
//! Output directory layout:
//!
//! ```text
//! metrics.jsonl               one deterministic record per PPO iteration
//! timing.jsonl                wall-clock and throughput per iteration
//! checkpoints/latest.rpck     learner incl. optimizer state
//! checkpoints/latest.json     task state and counters for resuming
//! policy.rpck                 final policy (no optimizer state)
//! diagnostics/                rollout dumps of aborted updates
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::ArrayViewMut2;
use reposer_core::env::Thresholds;
use reposer_ppo::{lr_schedule, ActMode, Checkpoint, Learner, PpoConfig, PpoError, RolloutBatch};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, HarnessError, Result};
use crate::task::BatchTask;

#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub ppo: PpoConfig,
    pub seed: u64,
    pub total_steps: u64,
    pub checkpoint_interval: u64,
    /// No files are written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Success thresholds for the position/orientation breakdown in metrics.
    pub thresholds: Option<Thresholds>,
    /// Stored in every checkpoint (resolved config, hashes).
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: u64,
    /// Environment steps collected so far, including this iteration.
    pub global_step: u64,
    pub lr: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub mean_reward: f64,
    /// Batch means of the weighted reward terms.
    pub reward_fingertip_to_object: Option<f64>,
    pub reward_fingertip_velocity: Option<f64>,
    pub reward_object_goal: Option<f64>,
    pub faults: u64,
    pub episodes: u64,
    pub success_rate: Option<f64>,
    pub success_any_rate: Option<f64>,
    pub position_success_rate: Option<f64>,
    pub orientation_success_rate: Option<f64>,
    pub mean_episode_return: Option<f64>,
    pub mean_final_position_error: Option<f64>,
    pub mean_final_rotation_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub iteration: u64,
    pub rollout_secs: f64,
    pub update_secs: f64,
    pub env_steps_per_sec: f64,
    /// Cumulative training wall-clock time.
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResumeState {
    iteration: u64,
    global_step: u64,
    wall_secs: f64,
    task: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub iterations: u64,
    pub global_step: u64,
    pub final_metrics: Option<IterationMetrics>,
    pub env_steps_per_sec: f64,
    pub wall_secs: f64,
}

pub struct Trainer<T: BatchTask> {
    pub task: T,
    pub learner: Learner,
    pub spec: TrainSpec,
    pub iteration: u64,
    pub global_step: u64,
    horizon: usize,
    wall_secs: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl<T: BatchTask> Trainer<T> {
    pub fn new(task: T, spec: TrainSpec) -> Result<Self> {
        let horizon = spec.ppo.horizon(task.num_envs()).map_err(|e| HarnessError::Config(e.to_string()))?;
        let learner = Learner::new(spec.ppo.clone(), task.actor_dim(), task.critic_dim(), task.action_dim(), spec.seed)?;
        let t = Self { task, learner, spec, iteration: 0, global_step: 0, horizon, wall_secs: 0.0 };
        if let Some(dir) = &t.spec.out_dir {
            fs::create_dir_all(dir.join("checkpoints")).map_err(io_err(dir))?;
            for f in ["metrics.jsonl", "timing.jsonl"] {
                File::create(dir.join(f)).map_err(io_err(dir.join(f)))?;
            }
        }
        Ok(t)
    }

    /// Continue from `out_dir/checkpoints/latest.*`. Metrics written after
    /// that checkpoint are discarded so the files match an uninterrupted run.
    pub fn resume(mut task: T, spec: TrainSpec) -> Result<Self> {
        let dir = spec.out_dir.clone().ok_or_else(|| HarnessError::Config("resume needs an output directory".into()))?;
        let ckpt_path = dir.join("checkpoints/latest.rpck");
        let ckpt = Checkpoint::load(&ckpt_path).map_err(|e| match e {
            PpoError::Io(source) => HarnessError::Io { path: ckpt_path.clone(), source },
            other => other.into(),
        })?;
        ckpt.check_compatible(task.actor_dim(), task.critic_dim(), task.action_dim())?;
        if ckpt.learner.config != spec.ppo || ckpt.learner.seed != spec.seed {
            return Err(HarnessError::Incompatible("checkpoint was trained with different PPO settings or seed".into()));
        }
        let state_path = dir.join("checkpoints/latest.json");
        let text = fs::read_to_string(&state_path).map_err(io_err(&state_path))?;
        let state: ResumeState = serde_json::from_str(&text)?;
        task.load_state(state.task)?;
        let horizon = spec.ppo.horizon(task.num_envs()).map_err(|e| HarnessError::Config(e.to_string()))?;
        for f in ["metrics.jsonl", "timing.jsonl"] {
            truncate_lines(&dir.join(f), state.iteration as usize)?;
        }
        Ok(Self {
            task,
            learner: ckpt.learner,
            spec,
            iteration: state.iteration,
            global_step: state.global_step,
            horizon,
            wall_secs: state.wall_secs,
        })
    }

    pub fn total_iterations(&self) -> u64 {
        self.spec.total_steps.div_ceil(self.spec.ppo.batch_size as u64)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn collect(&mut self) -> Result<(RolloutBatch, Vec<crate::task::TaskStep>)> {
        let (n, h) = (self.task.num_envs(), self.horizon);
        let (da, dc, du) = (self.task.actor_dim(), self.task.critic_dim(), self.task.action_dim());
        let mut batch = RolloutBatch::with_capacity(n, h, da, dc, du);
        let mut steps = Vec::with_capacity(h);
        let agent = &self.learner.agent;
        for t in 0..h {
            let rows = t * n..(t + 1) * n;
            {
                let a = batch.actor_obs.as_slice_mut().expect("standard layout");
                self.task.actor_obs(&mut a[rows.start * da..rows.end * da]);
                let c = batch.critic_obs.as_slice_mut().expect("standard layout");
                self.task.critic_obs(&mut c[rows.start * dc..rows.end * dc]);
            }
            let obs = batch.actor_obs.slice(ndarray::s![rows.clone(), ..]);
            let out = agent.act(obs, ActMode::Stochastic { seed: self.spec.seed, counter: self.iteration * h as u64 + t as u64 })?;
            let values = agent.value(batch.critic_obs.slice(ndarray::s![rows.clone(), ..]))?;
            let mut dst: ArrayViewMut2<f32> = batch.actions.slice_mut(ndarray::s![rows.clone(), ..]);
            dst.assign(&out.raw);
            batch.log_probs[rows.clone()].copy_from_slice(&out.log_probs);
            batch.values[rows.clone()].copy_from_slice(&values);
            let step = self.task.step(out.actions.as_slice().expect("standard layout"))?;
            for (i, r) in step.rewards.iter().enumerate() {
                batch.rewards[rows.start + i] = *r as f32;
            }
            batch.dones[rows.clone()].copy_from_slice(&step.dones);
            steps.push(step);
        }
        let mut crit = vec![0f32; n * dc];
        self.task.critic_obs(&mut crit);
        let crit = ndarray::Array2::from_shape_vec((n, dc), crit).expect("shape");
        batch.bootstrap = self.learner.agent.value(crit.view())?;
        Ok((batch, steps))
    }

    /// Collect one rollout and run one PPO update.
    pub fn run_iteration(&mut self) -> Result<(IterationMetrics, TimingRecord)> {
        let lr = lr_schedule(self.global_step, self.spec.total_steps, self.spec.ppo.lr_start, self.spec.ppo.lr_end);
        let t0 = Instant::now();
        let (batch, steps) = self.collect()?;
        let rollout_secs = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let stats = match self.learner.update(&batch, lr) {
            Ok(s) => s,
            Err(e @ PpoError::NonFinite { .. }) => {
                let dump = self.dump_batch(&batch)?;
                return Err(HarnessError::Runtime(format!("{e}; rollout written to {}", dump.display())));
            }
            Err(e) => return Err(e.into()),
        };
        let update_secs = t1.elapsed().as_secs_f64();
        self.iteration += 1;
        self.global_step += batch.len() as u64;
        self.wall_secs += rollout_secs + update_secs;

        let episodes: Vec<_> = steps.iter().flat_map(|s| s.episodes.iter()).collect();
        let terms: Vec<_> = steps.iter().flat_map(|s| s.terms.iter()).collect();
        let th = self.spec.thresholds;
        let metrics = IterationMetrics {
            iteration: self.iteration,
            global_step: self.global_step,
            lr,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
            entropy: stats.entropy,
            mean_reward: steps.iter().flat_map(|s| s.rewards.iter()).sum::<f64>() / batch.len() as f64,
            reward_fingertip_to_object: mean(terms.iter().map(|t| t.fingertip_to_object)),
            reward_fingertip_velocity: mean(terms.iter().map(|t| t.fingertip_velocity)),
            reward_object_goal: mean(terms.iter().map(|t| t.object_goal)),
            faults: steps.iter().flat_map(|s| s.faults.iter()).filter(|f| **f).count() as u64,
            episodes: episodes.len() as u64,
            success_rate: mean(episodes.iter().map(|e| e.success as u8 as f64)),
            success_any_rate: mean(episodes.iter().map(|e| e.success_any as u8 as f64)),
            position_success_rate: th.and_then(|t| mean(episodes.iter().map(|e| (e.final_pos_err < t.position) as u8 as f64))),
            orientation_success_rate: th.and_then(|t| mean(episodes.iter().map(|e| (e.final_rot_err < t.orientation) as u8 as f64))),
            mean_episode_return: mean(episodes.iter().map(|e| e.episode_return)),
            mean_final_position_error: mean(episodes.iter().map(|e| e.final_pos_err)),
            mean_final_rotation_error: mean(episodes.iter().map(|e| e.final_rot_err)),
        };
        let timing = TimingRecord {
            iteration: self.iteration,
            rollout_secs,
            update_secs,
            env_steps_per_sec: batch.len() as f64 / rollout_secs.max(1e-9),
            wall_secs: self.wall_secs,
        };
        if let Some(dir) = &self.spec.out_dir {
            append_line(&dir.join("metrics.jsonl"), &serde_json::to_string(&metrics)?)?;
            append_line(&dir.join("timing.jsonl"), &serde_json::to_string(&timing)?)?;
        }
        Ok((metrics, timing))
    }

    /// Train until the step budget is spent, or for at most `max_iterations`
    /// more iterations.
    pub fn run(&mut self, max_iterations: Option<u64>, mut on_iteration: impl FnMut(&IterationMetrics, &TimingRecord)) -> Result<TrainSummary> {
        let total = self.total_iterations();
        let stop = max_iterations.map_or(total, |m| (self.iteration + m).min(total));
        let mut last = None;
        let (mut steps, mut secs) = (0u64, 0.0);
        while self.iteration < stop {
            let (m, t) = self.run_iteration()?;
            on_iteration(&m, &t);
            steps += self.spec.ppo.batch_size as u64;
            secs += t.rollout_secs;
            if self.iteration % self.spec.checkpoint_interval == 0 || self.iteration == stop {
                self.save_checkpoint()?;
            }
            last = Some(m);
        }
        if self.iteration == total {
            if let Some(dir) = &self.spec.out_dir {
                self.checkpoint().save(&dir.join("policy.rpck"), false)?;
            }
        }
        Ok(TrainSummary {
            iterations: self.iteration,
            global_step: self.global_step,
            final_metrics: last,
            env_steps_per_sec: if secs > 0.0 { steps as f64 / secs } else { 0.0 },
            wall_secs: self.wall_secs,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.learner.clone(), self.global_step, self.spec.extra.clone())
    }

    pub fn save_checkpoint(&self) -> Result<()> {
        let Some(dir) = &self.spec.out_dir else { return Ok(()) };
        let ckpt_dir = dir.join("checkpoints");
        fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
        let state = ResumeState {
            iteration: self.iteration,
            global_step: self.global_step,
            wall_secs: self.wall_secs,
            task: self.task.save_state()?,
        };
        let tmp = ckpt_dir.join("latest.json.tmp");
        fs::write(&tmp, serde_json::to_vec(&state)?).map_err(io_err(&tmp))?;
        self.checkpoint().save(&ckpt_dir.join("latest.rpck"), true).map_err(|e| match e {
            PpoError::Io(source) => HarnessError::Io { path: ckpt_dir.join("latest.rpck"), source },
            other => other.into(),
        })?;
        fs::rename(&tmp, ckpt_dir.join("latest.json")).map_err(io_err(ckpt_dir.join("latest.json")))?;
        Ok(())
    }

    fn dump_batch(&self, batch: &RolloutBatch) -> Result<PathBuf> {
        let dir = self.spec.out_dir.clone().unwrap_or_else(std::env::temp_dir).join("diagnostics");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(format!("batch-{:06}.json", self.iteration + 1));
        let dump = serde_json::json!({
            "iteration": self.iteration + 1,
            "num_envs": batch.num_envs,
            "horizon": batch.horizon,
            "rewards": batch.rewards,
            "values": batch.values,
            "dones": batch.dones,
            "log_probs": batch.log_probs,
            "bootstrap": batch.bootstrap,
            "actions": batch.actions.iter().collect::<Vec<_>>(),
            "actor_obs": batch.actor_obs.iter().collect::<Vec<_>>(),
            "critic_obs": batch.critic_obs.iter().collect::<Vec<_>>(),
        });
        fs::write(&path, serde_json::to_vec(&dump)?).map_err(io_err(&path))?;
        Ok(path)
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))
}

fn truncate_lines(path: &Path, keep: usize) -> Result<()> {
    let lines: Vec<String> = match File::open(path) {
        Ok(f) => BufReader::new(f).lines().take(keep).collect::<std::io::Result<_>>().map_err(io_err(path))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(HarnessError::Io { path: path.into(), source: e }),
    };
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Read a metrics file back.
pub fn read_metrics(path: &Path) -> Result<Vec<IterationMetrics>> {
    let f = File::open(path).map_err(io_err(path))?;
    BufReader::new(f)
        .lines()
        .map(|l| Ok(serde_json::from_str(&l.map_err(io_err(path))?)?))
        .collect()
}

/// Training spec for the reposing task described by `cfg`.
pub fn engine_spec(cfg: &crate::config::EngineConfig, out_dir: Option<PathBuf>) -> TrainSpec {
    TrainSpec {
        ppo: cfg.ppo.clone(),
        seed: cfg.run.seed,
        total_steps: cfg.run.total_steps,
        checkpoint_interval: cfg.run.checkpoint_interval,
        out_dir,
        thresholds: Some(cfg.task.thresholds()),
        extra: serde_json::json!({ "config": cfg, "config_hash": cfg.hash() }),
    }
}

/// Environment for training under `cfg`, seeded with the run seed.
pub fn engine_env(cfg: &crate::config::EngineConfig) -> Result<reposer_core::env::ReposeEnv> {
    Ok(reposer_core::env::ReposeEnv::new(cfg.physics.clone(), cfg.task.clone(), cfg.dr.clone(), cfg.run.num_envs, cfg.run.seed)?)
}
