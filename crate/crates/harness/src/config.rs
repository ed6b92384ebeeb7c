//! Engine configuration: built-in profiles, TOML overlays and `--set`
//! overrides, all merged as a value tree and validated before use.

use std::path::{Path, PathBuf};

use reposer_core::domrand::DrConfig;
use reposer_core::env::TaskConfig;
use reposer_core::physics::PhysicsConfig;
use reposer_ppo::PpoConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Environment steps to train for.
    pub total_steps: u64,
    pub num_envs: usize,
    /// Relative paths resolve against the output root.
    pub output_dir: PathBuf,
    /// PPO iterations between checkpoints.
    pub checkpoint_interval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub eval_trials: usize,
    /// Seed of the evaluation goal/reset sequences, shared by every arm.
    pub eval_seed: u64,
    pub seeds: Vec<u64>,
    pub confidence: f64,
    pub scale_grid: Vec<f64>,
    pub mass_grid: Vec<f64>,
    pub position_thresholds: Vec<f64>,
    pub orientation_thresholds_deg: Vec<f64>,
    pub objects: Vec<String>,
    /// Environment steps per ablation arm.
    pub ablation_steps: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            eval_trials: 1024,
            eval_seed: 1_000_003,
            seeds: vec![0, 1, 2],
            confidence: 0.8,
            scale_grid: vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.97, 1.0, 1.03, 1.1, 1.2, 1.3, 1.4, 1.5],
            mass_grid: vec![0.25, 0.35, 0.5, 0.7, 0.85, 1.0, 1.15, 1.4, 2.0, 2.8, 4.0],
            position_thresholds: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            orientation_thresholds_deg: vec![10.0, 15.0, 22.0, 30.0, 45.0, 60.0],
            objects: [
                "cube:6.5",
                "sphere:3.75",
                "cuboid:2x8x2",
                "cuboid:2x8x4",
                "cuboid:4x8x4",
                "cuboid:2x6.5x2",
                "cuboid:2x6.5x4",
                "cuboid:4x6.5x4",
            ]
            .map(String::from)
            .to_vec(),
            ablation_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub physics: PhysicsConfig,
    pub task: TaskConfig,
    pub dr: DrConfig,
    pub ppo: PpoConfig,
    pub harness: HarnessConfig,
    pub run: RunConfig,
}

pub const PROFILES: [&str; 3] = ["paper", "full", "smoke"];

impl EngineConfig {
    /// Desk-scale defaults: every published constant, 4096 environments and
    /// 5e7 steps.
    pub fn paper() -> Self {
        Self {
            physics: PhysicsConfig::default(),
            task: TaskConfig::default(),
            dr: DrConfig::paper(),
            ppo: PpoConfig::default(),
            harness: HarnessConfig::default(),
            run: RunConfig {
                seed: 0,
                total_steps: 50_000_000,
                num_envs: 4096,
                output_dir: PathBuf::from("run"),
                checkpoint_interval: 50,
            },
        }
    }

    /// The original scale: 16384 environments, 1e9 steps.
    pub fn full() -> Self {
        let mut c = Self::paper();
        c.run.num_envs = 16384;
        c.run.total_steps = 1_000_000_000;
        c.harness.ablation_steps = 1_000_000_000;
        c
    }

    /// Tiny networks and batches for tests and quick checks.
    pub fn smoke() -> Self {
        let mut c = Self::paper();
        c.run.num_envs = 32;
        c.run.total_steps = 32 * 16 * 3;
        c.run.checkpoint_interval = 2;
        c.task.episode_length = 40;
        c.ppo.batch_size = 512;
        c.ppo.minibatch_size = 256;
        c.ppo.epochs = 2;
        c.ppo.actor_hidden = vec![32, 32];
        c.ppo.critic_hidden = vec![32, 32];
        c.harness.eval_trials = 16;
        c.harness.seeds = vec![0];
        c.harness.ablation_steps = 512;
        c
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "full" => Ok(Self::full()),
            "smoke" => Ok(Self::smoke()),
            other => Err(HarnessError::Config(format!("unknown profile {other:?}; expected one of {PROFILES:?}"))),
        }
    }

    /// Profile defaults, then the optional TOML file, then `section.key=value`
    /// overrides; the result is validated.
    pub fn load(profile: &str, file: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut tree = toml::Value::try_from(Self::profile(profile)?).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let overlay: toml::Value =
                toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut tree, overlay);
        }
        for s in sets {
            apply_set(&mut tree, s)?;
        }
        let cfg: Self = tree.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.task.validate()?;
        self.dr.validate()?;
        self.ppo.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let r = &self.run;
        if r.num_envs == 0 || r.total_steps == 0 || r.checkpoint_interval == 0 {
            return Err(HarnessError::Config("run.num_envs, run.total_steps and run.checkpoint_interval must be positive".into()));
        }
        self.ppo.horizon(r.num_envs).map_err(|e| HarnessError::Config(e.to_string()))?;
        let h = &self.harness;
        if !(h.confidence > 0.0 && h.confidence < 1.0) {
            return Err(HarnessError::Config(format!("harness.confidence must lie in (0, 1), got {}", h.confidence)));
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&h.scale_grid) || !positive(&h.mass_grid) || !positive(&h.position_thresholds) || !positive(&h.orientation_thresholds_deg) {
            return Err(HarnessError::Config("harness grids and thresholds must be positive".into()));
        }
        for o in &h.objects {
            crate::eval::ObjectSpec::parse(o)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) if existing.is_table() && v.is_table() => merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Apply one `a.b.c=value` override. The value is read as a TOML literal,
/// falling back to a bare string.
fn apply_set(tree: &mut toml::Value, set: &str) -> Result<()> {
    let (path, raw) = set
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {set:?} is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(HarnessError::Config(format!("override {set:?} has an empty key")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut node = tree;
    for k in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("override {set:?}: {k} is not a section")))?;
        node = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| HarnessError::Config(format!("override {set:?}: parent is not a section")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
