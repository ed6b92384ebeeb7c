//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                                          |
//! |--------------|--------------------------------------------------|
//! | 0..4         | magic `RPCK`                                     |
//! | 4..8         | `u32` format version (currently 1)               |
//! | 8..12        | `u32` manifest length `L` in bytes               |
//! | 12..12+L     | UTF-8 JSON manifest                              |
//! | 12+L..       | tensor data, `f32` little-endian, back to back   |
//!
//! The manifest lists every tensor as `{name, shape, offset}` with `offset`
//! counted in `f32` elements from the start of the tensor data. Tensor names:
//! `actor.{i}.w` (`[in, out]`, row-major), `actor.{i}.b`, `actor.log_std`,
//! `critic.{i}.w`, `critic.{i}.b`, and optionally `adam.{actor|critic}.{m|v}.{k}`
//! for the optimizer moments of the `k`-th parameter tensor. Normalizer
//! statistics, hyperparameters, seed, iteration and global step are stored
//! in the manifest itself.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{PpoError, Result};
use crate::nn::{Adam, Linear, Mlp};
use crate::normalizer::RunningNorm;
use crate::policy::{Agent, GaussianPolicy, NetShapes};
use crate::ppo::{Learner, PpoConfig};

pub const MAGIC: &[u8; 4] = b"RPCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSteps {
    pub actor: u64,
    pub critic: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub iteration: u64,
    pub global_step: u64,
    pub ppo: PpoConfig,
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub actor_norm: RunningNorm,
    pub critic_norm: RunningNorm,
    pub optimizer: Option<OptimizerSteps>,
    pub tensors: Vec<TensorEntry>,
    /// Free-form metadata from the caller (config, hashes, run state).
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub learner: Learner,
    pub global_step: u64,
    pub extra: serde_json::Value,
}

struct Writer {
    entries: Vec<TensorEntry>,
    data: Vec<f32>,
}

impl Writer {
    fn push(&mut self, name: String, shape: Vec<usize>, values: &[f32]) {
        self.entries.push(TensorEntry { name, shape, offset: self.data.len() });
        self.data.extend_from_slice(values);
    }

    fn mlp(&mut self, prefix: &str, net: &Mlp<f32>) {
        for (i, l) in net.layers.iter().enumerate() {
            self.push(format!("{prefix}.{i}.w"), vec![l.w.nrows(), l.w.ncols()], l.w.as_slice().expect("standard layout"));
            self.push(format!("{prefix}.{i}.b"), vec![l.b.len()], l.b.as_slice().expect("standard layout"));
        }
    }

    fn adam(&mut self, prefix: &str, opt: &Adam<f32>) {
        for (k, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
            self.push(format!("adam.{prefix}.m.{k}"), vec![m.len()], m);
            self.push(format!("adam.{prefix}.v.{k}"), vec![v.len()], v);
        }
    }
}

impl Checkpoint {
    pub fn new(learner: Learner, global_step: u64, extra: serde_json::Value) -> Self {
        Self { learner, global_step, extra }
    }

    pub fn shapes(&self) -> NetShapes {
        self.learner.agent.shapes()
    }

    /// Serialize to bytes. `with_optimizer` controls whether Adam moments are
    /// included (needed to resume training, not for evaluation).
    pub fn to_bytes(&self, with_optimizer: bool) -> Result<Vec<u8>> {
        let l = &self.learner;
        let mut w = Writer { entries: Vec::new(), data: Vec::new() };
        w.mlp("actor", &l.agent.actor.mean);
        w.push("actor.log_std".into(), vec![l.agent.actor.log_std.len()], l.agent.actor.log_std.as_slice().expect("standard layout"));
        w.mlp("critic", &l.agent.critic);
        if with_optimizer {
            w.adam("actor", &l.actor_opt);
            w.adam("critic", &l.critic_opt);
        }
        let manifest = Manifest {
            format: "reposer-checkpoint".into(),
            version: VERSION,
            seed: l.seed,
            iteration: l.iteration,
            global_step: self.global_step,
            ppo: l.config.clone(),
            actor_sizes: l.agent.actor.mean.sizes(),
            critic_sizes: l.agent.critic.sizes(),
            actor_norm: l.agent.actor_norm.clone(),
            critic_norm: l.agent.critic_norm.clone(),
            optimizer: with_optimizer.then(|| OptimizerSteps { actor: l.actor_opt.step, critic: l.critic_opt.step }),
            tensors: w.entries,
            extra: self.extra.clone(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(12 + json.len() + 4 * w.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &w.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: &str| PpoError::Format(m.to_string());
        if bytes.len() < 12 || &bytes[0..4] != MAGIC {
            return Err(fmt("missing RPCK magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(PpoError::Incompatible(format!("checkpoint version {version}, reader supports {VERSION}")));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + len).ok_or_else(|| fmt("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(body)?;
        let raw = &bytes[12 + len..];
        if raw.len() % 4 != 0 {
            return Err(fmt("tensor data is not a whole number of f32 values"));
        }
        let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let find = |name: &str, shape: &[usize]| -> Result<&[f32]> {
            let e = manifest
                .tensors
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| PpoError::Format(format!("missing tensor {name}")))?;
            if e.shape != shape {
                return Err(PpoError::Format(format!("tensor {name} has shape {:?}, expected {shape:?}", e.shape)));
            }
            let n: usize = shape.iter().product();
            data.get(e.offset..e.offset + n).ok_or_else(|| PpoError::Format(format!("tensor {name} out of bounds")))
        };
        let mlp = |prefix: &str, sizes: &[usize]| -> Result<Mlp<f32>> {
            let mut layers = Vec::new();
            for (i, s) in sizes.windows(2).enumerate() {
                let w = find(&format!("{prefix}.{i}.w"), &[s[0], s[1]])?;
                let b = find(&format!("{prefix}.{i}.b"), &[s[1]])?;
                layers.push(Linear {
                    w: Array2::from_shape_vec((s[0], s[1]), w.to_vec()).expect("shape checked"),
                    b: Array1::from_vec(b.to_vec()),
                });
            }
            Ok(Mlp { layers })
        };
        if manifest.actor_sizes.len() < 2 || manifest.critic_sizes.len() < 2 {
            return Err(fmt("network needs at least two layer sizes"));
        }
        let actor_mean = mlp("actor", &manifest.actor_sizes)?;
        let action = *manifest.actor_sizes.last().unwrap();
        let log_std = Array1::from_vec(find("actor.log_std", &[action])?.to_vec());
        let critic = mlp("critic", &manifest.critic_sizes)?;
        let agent = Agent {
            actor: GaussianPolicy { mean: actor_mean, log_std },
            critic,
            actor_norm: manifest.actor_norm.clone(),
            critic_norm: manifest.critic_norm.clone(),
        };
        let mut learner = Learner::from_agent(manifest.ppo.clone(), agent, manifest.seed);
        learner.iteration = manifest.iteration;
        if let Some(steps) = &manifest.optimizer {
            for (prefix, opt, st) in [("actor", &mut learner.actor_opt, steps.actor), ("critic", &mut learner.critic_opt, steps.critic)] {
                opt.step = st;
                for k in 0..opt.m.len() {
                    let n = opt.m[k].len();
                    opt.m[k] = find(&format!("adam.{prefix}.m.{k}"), &[n])?.to_vec();
                    opt.v[k] = find(&format!("adam.{prefix}.v.{k}"), &[n])?.to_vec();
                }
            }
        }
        Ok(Self { learner, global_step: manifest.global_step, extra: manifest.extra })
    }

    /// Write atomically: a sibling temporary file is renamed over `path`.
    pub fn save(&self, path: &Path, with_optimizer: bool) -> Result<()> {
        let bytes = self.to_bytes(with_optimizer)?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Fail unless the stored networks consume and produce the given sizes.
    pub fn check_compatible(&self, actor_obs: usize, critic_obs: usize, action: usize) -> Result<()> {
        let s = self.shapes();
        if (s.actor_obs, s.critic_obs, s.action) != (actor_obs, critic_obs, action) {
            return Err(PpoError::Incompatible(format!(
                "checkpoint expects actor {} / critic {} inputs and {} actions, environment provides {actor_obs} / {critic_obs} / {action}",
                s.actor_obs, s.critic_obs, s.action
            )));
        }
        Ok(())
    }
}
