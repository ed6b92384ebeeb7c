//! Evaluation protocols: plain evaluation, success breakdown, threshold
//! heatmap, robustness sweeps and zero-shot object transfer.

use reposer_core::domrand::DrConfig;
use reposer_core::env::{ParamOverride, ReposeEnv, TaskConfig, Thresholds};
use reposer_core::physics::{ObjectShape, PhysicsConfig, NUM_JOINTS};
use reposer_ppo::{ActMode, Agent};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{HarnessError, Result};

/// Everything that fixes an evaluation apart from the policy.
#[derive(Debug, Clone)]
pub struct EvalSpec {
    pub physics: PhysicsConfig,
    pub task: TaskConfig,
    pub dr: DrConfig,
    pub trials: usize,
    pub seed: u64,
    pub confidence: f64,
    pub config_hash: String,
    pub checkpoint_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub success: bool,
    pub success_any: bool,
    /// Final position error, m.
    pub pos_err: f64,
    /// Final rotation error, rad.
    pub rot_err: f64,
    #[serde(rename = "return")]
    pub episode_return: f64,
    /// A non-finite action or state occurred; scored as a failure.
    pub fault: bool,
}

impl TrialRecord {
    pub fn passes(&self, position: f64, orientation: f64) -> bool {
        !self.fault && self.pos_err < position && self.rot_err < orientation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub config_hash: String,
    pub checkpoint_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub confidence: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub position_success_rate: f64,
    pub orientation_success_rate: f64,
    pub success_any_rate: f64,
    pub mean_return: f64,
    pub mean_pos_err: f64,
    pub mean_rot_err: f64,
    pub faults: usize,
    pub thresholds: Thresholds,
    pub records: Vec<TrialRecord>,
}

/// Wilson score interval for `k` successes in `n` Bernoulli trials.
pub fn wilson_interval(k: usize, n: usize, confidence: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + confidence / 2.0);
    let (n, p) = (n as f64, k as f64 / n as f64);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Position-only and orientation-only success rates, each scored against
/// its own threshold.
pub fn success_breakdown(records: &[TrialRecord], t: &Thresholds) -> (f64, f64) {
    if records.is_empty() {
        return (0.0, 0.0);
    }
    let n = records.len() as f64;
    let pos = records.iter().filter(|r| !r.fault && r.pos_err < t.position).count() as f64 / n;
    let rot = records.iter().filter(|r| !r.fault && r.rot_err < t.orientation).count() as f64 / n;
    (pos, rot)
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        v.sum::<f64>() / n as f64
    }
}

impl EvalReport {
    pub fn from_records(label: &str, spec: &EvalSpec, records: Vec<TrialRecord>) -> Self {
        let thresholds = spec.task.thresholds();
        let n = records.len();
        let successes = records.iter().filter(|r| r.success && !r.fault).count();
        let (ci_low, ci_high) = wilson_interval(successes, n, spec.confidence);
        let (position_success_rate, orientation_success_rate) = success_breakdown(&records, &thresholds);
        Self {
            label: label.to_string(),
            config_hash: spec.config_hash.clone(),
            checkpoint_hash: spec.checkpoint_hash.clone(),
            seed: spec.seed,
            trials: n,
            successes,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            confidence: spec.confidence,
            ci_low,
            ci_high,
            position_success_rate,
            orientation_success_rate,
            success_any_rate: mean(records.iter().map(|r| (r.success_any && !r.fault) as u8 as f64), n),
            mean_return: mean(records.iter().map(|r| r.episode_return), n),
            mean_pos_err: mean(records.iter().map(|r| r.pos_err), n),
            mean_rot_err: mean(records.iter().map(|r| r.rot_err), n),
            faults: records.iter().filter(|r| r.fault).count(),
            thresholds,
            records,
        }
    }

    /// The report without per-trial records.
    pub fn summary(&self) -> EvalReport {
        EvalReport { records: Vec::new(), ..self.clone() }
    }
}

/// Run one episode per trial with deterministic actions. Trial `i` is
/// environment `i` of a batch seeded with `spec.seed`, so every policy sees
/// the same goal and reset sequence.
pub fn evaluate(agent: &Agent<f32>, spec: &EvalSpec, overrides: ParamOverride, label: &str) -> Result<EvalReport> {
    if spec.trials == 0 {
        return Ok(EvalReport::from_records(label, spec, Vec::new()));
    }
    let mut env = ReposeEnv::new(spec.physics.clone(), spec.task.clone(), spec.dr.clone(), spec.trials, spec.seed)?;
    let s = agent.shapes();
    if (s.actor_obs, s.critic_obs, s.action) != (env.actor_dim(), env.critic_dim(), NUM_JOINTS) {
        return Err(HarnessError::Incompatible(format!(
            "policy expects {} actor inputs and {} actions, environment provides {} and {}",
            s.actor_obs,
            s.action,
            env.actor_dim(),
            NUM_JOINTS
        )));
    }
    env.overrides = overrides;
    env.reseed(spec.seed);
    // Evaluation scores the full task, after the approach-reward curriculum.
    env.global_step = spec.task.curriculum_cutoff;
    let n = spec.trials;
    let mut obs = ndarray::Array2::<f32>::zeros((n, env.actor_dim()));
    let mut faults = vec![false; n];
    let mut records: Vec<Option<TrialRecord>> = vec![None; n];
    for _ in 0..spec.task.episode_length {
        env.actor_obs(obs.as_slice_mut().expect("standard layout"));
        let out = agent.act(obs.view(), ActMode::Deterministic)?;
        let step = env.step(out.actions.as_slice().expect("standard layout"))?;
        for (f, x) in faults.iter_mut().zip(&step.faults) {
            *f |= *x;
        }
        for e in step.episodes {
            if records[e.env_id].is_none() {
                records[e.env_id] = Some(TrialRecord {
                    trial: e.env_id,
                    success: e.success,
                    success_any: e.success_any,
                    pos_err: e.final_pos_err,
                    rot_err: e.final_rot_err,
                    episode_return: e.episode_return,
                    fault: faults[e.env_id],
                });
            }
        }
        if records.iter().all(Option::is_some) {
            break;
        }
    }
    let records = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| HarnessError::Runtime(format!("trial {i} did not finish its episode"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_records(label, spec, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapReport {
    pub config_hash: String,
    pub checkpoint_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub position_thresholds: Vec<f64>,
    pub orientation_thresholds_deg: Vec<f64>,
    /// `success[i][j]` uses position threshold `i` and orientation threshold `j`.
    pub success: Vec<Vec<f64>>,
}

/// Re-score the same trials under every threshold pair.
pub fn threshold_heatmap(report: &EvalReport, position: &[f64], orientation_deg: &[f64]) -> Result<HeatmapReport> {
    if position.is_empty() || orientation_deg.is_empty() {
        return Err(HarnessError::Config("threshold grids must not be empty".into()));
    }
    let n = report.records.len();
    let success = position
        .iter()
        .map(|&p| {
            orientation_deg
                .iter()
                .map(|&r| {
                    let k = report.records.iter().filter(|t| t.passes(p, r.to_radians())).count();
                    if n == 0 {
                        0.0
                    } else {
                        k as f64 / n as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(HeatmapReport {
        config_hash: report.config_hash.clone(),
        checkpoint_hash: report.checkpoint_hash.clone(),
        seed: report.seed,
        trials: n,
        position_thresholds: position.to_vec(),
        orientation_thresholds_deg: orientation_deg.to_vec(),
        success,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Scale,
    Mass,
}

impl std::str::FromStr for SweepParameter {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scale" => Ok(Self::Scale),
            "mass" => Ok(Self::Mass),
            other => Err(HarnessError::Config(format!("unknown sweep parameter {other:?}; expected scale or mass"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    /// Multipliers of the nominal object value.
    pub grid: Vec<f64>,
    pub reports: Vec<EvalReport>,
}

/// Fix one object parameter at each grid multiplier, with every other
/// randomization disabled.
pub fn robustness_sweep(agent: &Agent<f32>, spec: &EvalSpec, parameter: SweepParameter, grid: &[f64]) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(HarnessError::Config("sweep grid is empty".into()));
    }
    if let Some(v) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(HarnessError::Config(format!("sweep grid values must be positive, got {v}")));
    }
    let spec = EvalSpec { dr: DrConfig::disabled(), ..spec.clone() };
    let reports = grid
        .iter()
        .map(|&v| {
            let o = match parameter {
                SweepParameter::Scale => ParamOverride { object_scale: Some(v), object_mass: None },
                SweepParameter::Mass => ParamOverride { object_scale: None, object_mass: Some(v) },
            };
            let label = format!("{}={v}", serde_json::to_value(parameter).expect("enum").as_str().expect("string"));
            evaluate(agent, &spec, o, &label)
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport { parameter, grid: grid.to_vec(), reports })
}

/// A primitive object, dimensions in centimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectSpec {
    Cube { edge: f64 },
    Sphere { radius: f64 },
    Cuboid { dims: [f64; 3] },
}

impl ObjectSpec {
    /// Parse `cube:6.5`, `sphere:3.75` or `cuboid:2x8x2` (centimetres).
    pub fn parse(s: &str) -> Result<Self> {
        let unsupported = || HarnessError::UnsupportedObject(format!("{s:?}; supported: cube:<edge>, sphere:<radius>, cuboid:<x>x<y>x<z> (cm)"));
        let (kind, arg) = s.split_once(':').ok_or_else(unsupported)?;
        let num = |v: &str| -> Result<f64> {
            let x: f64 = v.trim().parse().map_err(|_| unsupported())?;
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(unsupported())
            }
        };
        match kind.trim() {
            "cube" => Ok(Self::Cube { edge: num(arg)? }),
            "sphere" => Ok(Self::Sphere { radius: num(arg)? }),
            "cuboid" => {
                let parts: Vec<&str> = arg.split('x').collect();
                if parts.len() != 3 {
                    return Err(unsupported());
                }
                Ok(Self::Cuboid { dims: [num(parts[0])?, num(parts[1])?, num(parts[2])?] })
            }
            _ => Err(unsupported()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Cube { edge } => format!("cube:{edge}"),
            Self::Sphere { radius } => format!("sphere:{radius}"),
            Self::Cuboid { dims: [a, b, c] } => format!("cuboid:{a}x{b}x{c}"),
        }
    }

    pub fn shape(&self) -> ObjectShape {
        match *self {
            Self::Cube { edge } => ObjectShape::cube(edge / 200.0),
            Self::Sphere { radius } => ObjectShape::Sphere { radius: radius / 100.0 },
            Self::Cuboid { dims } => ObjectShape::Box { half_extents: dims.map(|d| d / 200.0) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub object: ObjectSpec,
    pub report: EvalReport,
}

/// Swap the simulated object while keeping the training keypoints, mass and
/// friction; all randomization is disabled.
pub fn zero_shot_objects(agent: &Agent<f32>, spec: &EvalSpec, objects: &[String]) -> Result<Vec<ObjectReport>> {
    let parsed = objects.iter().map(|o| ObjectSpec::parse(o)).collect::<Result<Vec<_>>>()?;
    parsed
        .into_iter()
        .map(|object| {
            let mut s = EvalSpec { dr: DrConfig::disabled(), ..spec.clone() };
            s.physics.object.shape = object.shape();
            let report = evaluate(agent, &s, ParamOverride::default(), &object.name())?;
            Ok(ObjectReport { object, report })
        })
        .collect()
}
