//! The batched cube reposing task.
//!
//! Each environment owns its random streams, keyed by its id and a per-env
//! tick (for per-step noise) or episode index (for resets), so results never
//! depend on how the batch is partitioned.

pub mod obs;
pub mod reward;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domrand::{apply_action_noise, apply_observation_noise, noisy_pose, sample_episode_randomization, DrConfig};
use crate::error::{CoreError, Result};
use crate::physics::{
    self, apply_external_force, forward_kinematics, EnvParams, EnvSim, ObjectState, PhysicsConfig, SimState,
    MAX_TORQUE, NUM_FINGERS, NUM_JOINTS,
};
use crate::rng::{normal, stream, Purpose};
use crate::spatial::{
    cube_local_keypoints, keypoints_to_flat, pose_to_keypoints, quat_sign_filter, rot_dist, KernelParams,
    KeypointSet, Pose, Quaternion, Vec3,
};
use obs::{scale_to_unit, ActorLayout, CriticLayout, JOINT_VEL_LIMIT};
pub use reward::{compute_reward, fingertip_to_object, ContactSnapshot, RewardBreakdown, WeightedReward};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseEncoding {
    Keypoints,
    PosQuat,
}

impl PoseEncoding {
    pub fn pose_dim(self) -> usize {
        match self {
            PoseEncoding::Keypoints => 24,
            PoseEncoding::PosQuat => 7,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            PoseEncoding::Keypoints => "KP",
            PoseEncoding::PosQuat => "PQ",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalOrientation {
    /// Uniform over SO(3).
    Full,
    /// Uniform yaw about the vertical axis only.
    Yaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalConfig {
    /// Goal positions are uniform in a vertical cylinder of this radius, m.
    pub radius: f64,
    /// Upper bound of goal heights; the lower bound is the keypoint cube's
    /// half extent.
    pub z_max: f64,
    pub orientation: GoalOrientation,
}

impl Default for GoalConfig {
    fn default() -> Self {
        Self { radius: 0.15, z_max: 0.25, orientation: GoalOrientation::Full }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetConfig {
    /// Object spawn positions are uniform in a disc of this radius, m.
    pub spawn_radius: f64,
    /// Std of the joint-angle perturbation around the home pose, rad.
    pub joint_noise: f64,
}

impl Default for ResetConfig {
    fn default() -> Self {
        Self { spawn_radius: 0.05, joint_noise: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// Policy steps per episode (750 = 15 s at 50 Hz).
    pub episode_length: u32,
    pub success_position: f64,
    /// rad
    pub success_orientation: f64,
    pub w_fingertip_to_object: f64,
    pub w_fingertip_velocity: f64,
    pub w_object_goal: f64,
    pub keypoint_kernel: KernelParams,
    pub pos_quat_kernel: KernelParams,
    /// The approach term is active while the global env-step count is at
    /// most this value.
    pub curriculum_cutoff: u64,
    /// Half extent of the cube whose corners define the keypoints, m.
    pub keypoint_half_extent: f64,
    pub observation: PoseEncoding,
    pub reward: PoseEncoding,
    /// Object pose observations refresh every this many policy steps.
    pub camera_period: u32,
    /// Probability that a camera refresh reports `-q` instead of `q`.
    pub camera_sign_flip: f64,
    /// Keep reported quaternions sign-consistent (pos-quat observations).
    pub sign_filter: bool,
    /// Torque is scaled by `max(0, 1 - c |qd| / v_max)`.
    pub safety_damping: f64,
    pub max_joint_velocity: f64,
    pub goal: GoalConfig,
    pub reset: ResetConfig,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            episode_length: 750,
            success_position: 0.02,
            success_orientation: 22f64.to_radians(),
            w_fingertip_to_object: -750.0,
            w_fingertip_velocity: -0.5,
            w_object_goal: 40.0,
            keypoint_kernel: KernelParams::KEYPOINTS,
            pos_quat_kernel: KernelParams::POS_QUAT,
            curriculum_cutoff: 50_000_000,
            keypoint_half_extent: 0.0325,
            observation: PoseEncoding::Keypoints,
            reward: PoseEncoding::Keypoints,
            camera_period: 5,
            camera_sign_flip: 0.0,
            sign_filter: true,
            safety_damping: 0.1,
            max_joint_velocity: JOINT_VEL_LIMIT,
            goal: GoalConfig::default(),
            reset: ResetConfig::default(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidArgument(format!("task.{m}")));
        if self.episode_length == 0 {
            return bad("episode_length must be positive");
        }
        if !(self.success_position > 0.0 && self.success_orientation > 0.0) {
            return bad("success thresholds must be positive");
        }
        if self.camera_period == 0 {
            return bad("camera_period must be positive");
        }
        if !(0.0..=1.0).contains(&self.camera_sign_flip) {
            return bad("camera_sign_flip must be a probability");
        }
        if !(self.keypoint_half_extent > 0.0) || !(self.max_joint_velocity > 0.0) || self.safety_damping < 0.0 {
            return bad("keypoint_half_extent and max_joint_velocity must be positive, safety_damping non-negative");
        }
        if !(self.goal.radius >= 0.0 && self.goal.z_max >= self.keypoint_half_extent) {
            return bad("goal cylinder must be non-empty");
        }
        self.keypoint_kernel.validate()?;
        self.pos_quat_kernel.validate()
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds { position: self.success_position, orientation: self.success_orientation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub position: f64,
    pub orientation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub pose: Pose,
    pub keypoints: KeypointSet,
}

pub fn sample_goal<R: Rng + ?Sized>(rng: &mut R, cfg: &TaskConfig) -> Goal {
    let g = &cfg.goal;
    let r = g.radius * rng.gen::<f64>().sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    let z = rng.gen_range(cfg.keypoint_half_extent..=g.z_max);
    let rotation = match g.orientation {
        GoalOrientation::Full => Quaternion::random_uniform(rng),
        GoalOrientation::Yaw => Quaternion::from_axis_angle(&Vec3::z(), rng.gen::<f64>() * std::f64::consts::TAU),
    };
    let pose = Pose::new(Vec3::new(r * theta.cos(), r * theta.sin(), z), rotation);
    let local = cube_local_keypoints(cfg.keypoint_half_extent).expect("validated half extent");
    Goal { pose, keypoints: pose_to_keypoints(&pose, &local) }
}

/// Scale a raw policy action to joint torques with safety damping. Returns
/// the torques and whether the action contained NaN (in which case the
/// torques are zero).
pub fn process_action(raw: &[f64; NUM_JOINTS], joint_vel: &[f64; NUM_JOINTS], cfg: &TaskConfig) -> ([f64; NUM_JOINTS], bool) {
    if raw.iter().any(|v| !v.is_finite()) {
        return ([0.0; NUM_JOINTS], true);
    }
    let mut out = [0.0; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let torque = raw[j].clamp(-1.0, 1.0) * MAX_TORQUE;
        let damp = (1.0 - cfg.safety_damping * joint_vel[j].abs() / cfg.max_joint_velocity).max(0.0);
        out[j] = (torque * damp).clamp(-MAX_TORQUE, MAX_TORQUE);
    }
    (out, false)
}

pub fn pose_errors(pose: &Pose, goal: &Pose) -> (f64, f64) {
    ((pose.translation - goal.translation).norm(), rot_dist(&pose.rotation, &goal.rotation))
}

pub fn check_success(pose: &Pose, goal: &Pose, t: &Thresholds) -> bool {
    let (p, r) = pose_errors(pose, goal);
    p < t.position && r < t.orientation
}

/// Held object-pose observation: refreshed with fresh noise every
/// `period`-th frame and repeated in between.
pub fn camera_delay_observe<R: Rng + ?Sized>(
    true_pose: &Pose,
    frame: u32,
    period: u32,
    held: &mut Pose,
    dr: &DrConfig,
    params: &EnvParams,
    rng: &mut R,
) -> Pose {
    if frame % period == 0 {
        *held = noisy_pose(true_pose, dr, &params.offsets, rng);
    }
    *held
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub env_id: usize,
    pub success: bool,
    pub success_any: bool,
    pub final_pos_err: f64,
    pub final_rot_err: f64,
    #[serde(rename = "return")]
    pub episode_return: f64,
}

/// Fixed object parameters for robustness sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamOverride {
    pub object_scale: Option<f64>,
    pub object_mass: Option<f64>,
}

/// Per-environment state beyond the physics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSlot {
    pub sim: EnvSim,
    pub params: EnvParams,
    pub goal: Goal,
    pub episode_index: u64,
    pub episode_step: u32,
    /// Steps taken by this env since construction; addresses per-step noise.
    pub tick: u64,
    pub episode_return: f64,
    pub ever_success: bool,
    pub held_pose: Pose,
    pub last_quat: Quaternion,
    pub last_action: [f64; NUM_JOINTS],
    pub prev: ContactSnapshot,
}

#[derive(Debug, Clone, Default)]
pub struct StepOutput {
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub faults: Vec<bool>,
    pub components: Vec<RewardBreakdown>,
    pub episodes: Vec<EpisodeRecord>,
}

struct Ctx<'a> {
    physics: &'a PhysicsConfig,
    task: &'a TaskConfig,
    dr: &'a DrConfig,
    local: KeypointSet,
    seed: u64,
    overrides: ParamOverride,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReposeEnv {
    pub physics: PhysicsConfig,
    pub task: TaskConfig,
    /// As configured; the effective profile is derived on use.
    pub dr: DrConfig,
    pub seed: u64,
    pub overrides: ParamOverride,
    pub slots: Vec<EnvSlot>,
    /// Env-steps taken by the whole batch (curriculum clock).
    pub global_step: u64,
    actor_layout_dim: usize,
    critic_layout_dim: usize,
}

impl ReposeEnv {
    pub fn new(physics: PhysicsConfig, task: TaskConfig, dr: DrConfig, num_envs: usize, seed: u64) -> Result<Self> {
        physics.validate()?;
        task.validate()?;
        dr.validate()?;
        if num_envs == 0 {
            return Err(CoreError::InvalidArgument("num_envs must be positive".into()));
        }
        let mut env = Self {
            actor_layout_dim: ActorLayout::new(task.observation).dim,
            critic_layout_dim: CriticLayout::new(task.observation).dim,
            physics,
            task,
            dr,
            seed,
            overrides: ParamOverride::default(),
            slots: Vec::with_capacity(num_envs),
            global_step: 0,
        };
        let ctx = env.ctx();
        let slots: Vec<EnvSlot> = (0..num_envs).map(|i| new_slot(i, 0, &ctx)).collect();
        env.slots = slots;
        Ok(env)
    }

    fn ctx(&self) -> Ctx<'_> {
        Ctx {
            physics: &self.physics,
            task: &self.task,
            dr: &self.dr,
            local: cube_local_keypoints(self.task.keypoint_half_extent).expect("validated"),
            seed: self.seed,
            overrides: self.overrides,
        }
    }

    pub fn num_envs(&self) -> usize {
        self.slots.len()
    }

    pub fn actor_dim(&self) -> usize {
        self.actor_layout_dim
    }

    pub fn critic_dim(&self) -> usize {
        self.critic_layout_dim
    }

    /// Restart every environment with fresh episodes (episode indices keep
    /// counting, so new draws are used).
    pub fn reset_all(&mut self) {
        let ctx = Ctx {
            physics: &self.physics,
            task: &self.task,
            dr: &self.dr,
            local: cube_local_keypoints(self.task.keypoint_half_extent).expect("validated"),
            seed: self.seed,
            overrides: self.overrides,
        };
        self.slots.par_iter_mut().enumerate().for_each(|(i, slot)| {
            let next = slot.episode_index + 1;
            let tick = slot.tick;
            *slot = new_slot(i, next, &ctx);
            slot.tick = tick;
        });
    }

    /// Restart every environment at episode 0 of a (possibly new) seed.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        let ctx = self.ctx();
        let slots: Vec<EnvSlot> = (0..self.num_envs()).map(|i| new_slot(i, 0, &ctx)).collect();
        self.slots = slots;
    }

    /// Step with flat `N x 9` raw actions in `[-1, 1]`.
    pub fn step(&mut self, actions: &[f32]) -> Result<StepOutput> {
        let n = self.num_envs();
        if actions.len() != n * NUM_JOINTS {
            return Err(CoreError::InvalidArgument(format!(
                "expected {} action values, got {}",
                n * NUM_JOINTS,
                actions.len()
            )));
        }
        self.global_step += n as u64;
        let global_step = self.global_step;
        let ctx = Ctx {
            physics: &self.physics,
            task: &self.task,
            dr: &self.dr,
            local: cube_local_keypoints(self.task.keypoint_half_extent).expect("validated"),
            seed: self.seed,
            overrides: self.overrides,
        };
        let results: Vec<SlotStep> = self
            .slots
            .par_iter_mut()
            .zip(actions.par_chunks(NUM_JOINTS))
            .enumerate()
            .map(|(i, (slot, a))| {
                let raw: [f64; NUM_JOINTS] = std::array::from_fn(|j| a[j] as f64);
                step_slot(slot, i, &raw, global_step, &ctx)
            })
            .collect();
        let mut out = StepOutput {
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            faults: Vec::with_capacity(n),
            components: Vec::with_capacity(n),
            episodes: Vec::new(),
        };
        for r in results {
            out.rewards.push(r.reward.total);
            out.dones.push(r.done);
            out.faults.push(r.fault);
            out.components.push(r.reward);
            if let Some(e) = r.episode {
                out.episodes.push(e);
            }
        }
        Ok(out)
    }

    /// Write the (noisy, camera-delayed) actor observations, `N x actor_dim`.
    pub fn actor_obs(&self, out: &mut [f32]) {
        let d = self.actor_dim();
        let ctx = self.ctx();
        out.par_chunks_mut(d).zip(self.slots.par_iter()).enumerate().for_each(|(i, (o, slot))| {
            let v = actor_observation(slot, i, &ctx);
            for (dst, src) in o.iter_mut().zip(&v) {
                *dst = *src as f32;
            }
        });
    }

    /// Write the noise-free critic observations, `N x critic_dim`.
    pub fn critic_obs(&self, out: &mut [f32]) {
        let d = self.critic_dim();
        let ctx = self.ctx();
        out.par_chunks_mut(d).zip(self.slots.par_iter()).for_each(|(o, slot)| {
            let v = critic_observation(slot, &ctx);
            for (dst, src) in o.iter_mut().zip(&v) {
                *dst = *src as f32;
            }
        });
    }

    pub fn actor_obs_f64(&self, env: usize) -> Vec<f64> {
        actor_observation(&self.slots[env], env, &self.ctx())
    }

    pub fn critic_obs_f64(&self, env: usize) -> Vec<f64> {
        critic_observation(&self.slots[env], &self.ctx())
    }

    /// Snapshot of the physics batch.
    pub fn sim_state(&self) -> SimState {
        SimState { envs: self.slots.iter().map(|s| s.sim.clone()).collect(), step: self.global_step / self.num_envs() as u64 }
    }
}

/// Build the initial state of episode `episode` for env `env_id`.
fn new_slot(env_id: usize, episode: u64, ctx: &Ctx) -> EnvSlot {
    let (sim, params, goal) = reset_env(env_id, episode, ctx);
    let frames = forward_kinematics(&ctx.physics.hand, &sim.joint_pos);
    let prev = ContactSnapshot { tips: frames.map(|f| f.tip_position), centroid: sim.object.pose.translation };
    let mut slot = EnvSlot {
        sim,
        params,
        goal,
        episode_index: episode,
        episode_step: 0,
        tick: 0,
        episode_return: 0.0,
        ever_success: false,
        held_pose: Pose::IDENTITY,
        last_quat: Quaternion::IDENTITY,
        last_action: [0.0; NUM_JOINTS],
        prev,
    };
    refresh_camera(&mut slot, env_id, ctx, true);
    slot
}

fn reset_env(env_id: usize, episode: u64, ctx: &Ctx) -> (EnvSim, EnvParams, Goal) {
    let id = env_id as u64;
    let mut params = sample_episode_randomization(ctx.dr, &mut stream(ctx.seed, Purpose::Episode, id, episode));
    if let Some(s) = ctx.overrides.object_scale {
        params.object_scale = s;
    }
    if let Some(m) = ctx.overrides.object_mass {
        params.object_mass = m;
    }
    let goal = sample_goal(&mut stream(ctx.seed, Purpose::Goal, id, episode), ctx.task);

    let mut rng = stream(ctx.seed, Purpose::Reset, id, episode);
    let hand = &ctx.physics.hand;
    let mut q = hand.home_joints();
    for v in &mut q {
        *v = (*v + ctx.task.reset.joint_noise * normal(&mut rng)).clamp(hand.joint_lower, hand.joint_upper);
    }
    let r = ctx.task.reset.spawn_radius * rng.gen::<f64>().sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    let yaw = rng.gen::<f64>() * std::f64::consts::TAU;
    let shape = ctx.physics.object.shape.scaled(params.object_scale);
    let pose = Pose::new(
        Vec3::new(r * theta.cos(), r * theta.sin(), shape.rest_height()),
        Quaternion::from_axis_angle(&Vec3::z(), yaw),
    );
    (EnvSim::new(q, ObjectState::at_rest(pose)), params, goal)
}

/// Refresh the held object-pose observation if this frame is a camera frame.
fn refresh_camera(slot: &mut EnvSlot, env_id: usize, ctx: &Ctx, first: bool) {
    let frame = slot.episode_step;
    if frame % ctx.task.camera_period != 0 {
        return;
    }
    let mut rng = stream(ctx.seed, Purpose::Camera, env_id as u64, (slot.episode_index << 32) | frame as u64);
    let dr = ctx.dr.effective();
    let mut held = slot.held_pose;
    let mut observed =
        camera_delay_observe(&slot.sim.object.pose, frame, ctx.task.camera_period, &mut held, &dr, &slot.params, &mut rng);
    if ctx.task.camera_sign_flip > 0.0 && rng.gen::<f64>() < ctx.task.camera_sign_flip {
        observed.rotation = -observed.rotation;
    }
    if ctx.task.sign_filter && !first {
        observed.rotation = quat_sign_filter(&observed.rotation, &slot.last_quat);
    }
    slot.last_quat = observed.rotation;
    slot.held_pose = observed;
}

struct SlotStep {
    reward: RewardBreakdown,
    done: bool,
    fault: bool,
    episode: Option<EpisodeRecord>,
}

fn step_slot(slot: &mut EnvSlot, env_id: usize, raw: &[f64; NUM_JOINTS], global_step: u64, ctx: &Ctx) -> SlotStep {
    let id = env_id as u64;
    let tick = slot.tick;
    slot.tick += 1;
    let dr = ctx.dr.effective();

    let (mut torques, action_fault) = process_action(raw, &slot.sim.joint_vel, ctx.task);
    slot.last_action = if action_fault { [0.0; NUM_JOINTS] } else { raw.map(|v| v.clamp(-1.0, 1.0)) };
    apply_action_noise(&mut torques, &dr.torque, &slot.params.offsets.torque, &mut stream(ctx.seed, Purpose::ActionNoise, id, tick));

    let mass = ctx.physics.object.mass * slot.params.object_mass;
    let g = -ctx.physics.gravity[2];
    apply_external_force(&mut slot.sim, &mut stream(ctx.seed, Purpose::Force, id, tick), &dr.external_force, mass, g);
    physics::step_env(&mut slot.sim, &torques, &slot.params, ctx.physics);
    let sim_fault = slot.sim.fault;

    let frames = forward_kinematics(&ctx.physics.hand, &slot.sim.joint_pos);
    let curr = ContactSnapshot { tips: frames.map(|f| f.tip_position), centroid: slot.sim.object.pose.translation };
    let tip_vel: [Vec3; NUM_FINGERS] =
        std::array::from_fn(|f| frames[f].point_velocity(&frames[f].tip_position, &slot.sim.joint_vel[3 * f..3 * f + 3]));
    let reward = compute_reward(&slot.prev, &curr, &tip_vel, &slot.sim.object.pose, &slot.goal.pose, global_step, ctx.task);
    slot.prev = curr;
    slot.episode_step += 1;
    slot.episode_return += reward.total;
    let thresholds = ctx.task.thresholds();
    let success_now = check_success(&slot.sim.object.pose, &slot.goal.pose, &thresholds);
    slot.ever_success |= success_now;

    let done = sim_fault || slot.episode_step >= ctx.task.episode_length;
    let mut episode = None;
    if done {
        let (p, r) = pose_errors(&slot.sim.object.pose, &slot.goal.pose);
        episode = Some(EpisodeRecord {
            episode: slot.episode_index,
            env_id,
            success: success_now && !sim_fault,
            success_any: slot.ever_success,
            final_pos_err: p,
            final_rot_err: r,
            episode_return: slot.episode_return,
        });
        let next = slot.episode_index + 1;
        *slot = new_slot(env_id, next, ctx);
        slot.tick = tick + 1;
    } else {
        refresh_camera(slot, env_id, ctx, false);
    }
    SlotStep { reward, done, fault: sim_fault || action_fault, episode }
}

fn push_pose(out: &mut Vec<f64>, pose: &Pose, encoding: PoseEncoding, local: &KeypointSet) {
    match encoding {
        PoseEncoding::Keypoints => out.extend_from_slice(&keypoints_to_flat(&pose_to_keypoints(pose, local))),
        PoseEncoding::PosQuat => out.extend_from_slice(&pose.to_array7()),
    }
}

fn proprio_block(out: &mut Vec<f64>, pos: &[f64; NUM_JOINTS], vel: &[f64; NUM_JOINTS], ctx: &Ctx) {
    let hand = &ctx.physics.hand;
    out.extend(pos.iter().map(|q| scale_to_unit(q.clamp(hand.joint_lower, hand.joint_upper), hand.joint_lower, hand.joint_upper)));
    out.extend(vel.iter().map(|v| scale_to_unit(v.clamp(-JOINT_VEL_LIMIT, JOINT_VEL_LIMIT), -JOINT_VEL_LIMIT, JOINT_VEL_LIMIT)));
}

fn actor_observation(slot: &EnvSlot, env_id: usize, ctx: &Ctx) -> Vec<f64> {
    let dr = ctx.dr.effective();
    let mut rng = stream(ctx.seed, Purpose::ObsNoise, env_id as u64, slot.tick);
    let mut pos = slot.sim.joint_pos;
    let mut vel = slot.sim.joint_vel;
    apply_observation_noise(&mut pos, &dr.joint_position, &slot.params.offsets.joint_position, &mut rng);
    apply_observation_noise(&mut vel, &dr.joint_velocity, &slot.params.offsets.joint_velocity, &mut rng);
    let mut out = Vec::with_capacity(75);
    proprio_block(&mut out, &pos, &vel, ctx);
    push_pose(&mut out, &slot.held_pose, ctx.task.observation, &ctx.local);
    push_pose(&mut out, &slot.goal.pose, ctx.task.observation, &ctx.local);
    out.extend_from_slice(&slot.last_action);
    out
}

fn critic_observation(slot: &EnvSlot, ctx: &Ctx) -> Vec<f64> {
    let sim = &slot.sim;
    let mut out = Vec::with_capacity(147);
    proprio_block(&mut out, &sim.joint_pos, &sim.joint_vel, ctx);
    push_pose(&mut out, &sim.object.pose, ctx.task.observation, &ctx.local);
    push_pose(&mut out, &slot.goal.pose, ctx.task.observation, &ctx.local);
    out.extend_from_slice(&slot.last_action);
    out.extend_from_slice(sim.object.linear_velocity.as_slice());
    out.extend_from_slice(sim.object.angular_velocity.as_slice());
    let frames = forward_kinematics(&ctx.physics.hand, &sim.joint_pos);
    for fr in &frames {
        out.extend_from_slice(&fr.tip_pose().to_array7());
    }
    for (f, fr) in frames.iter().enumerate() {
        let qd = &sim.joint_vel[3 * f..3 * f + 3];
        out.extend_from_slice(fr.point_velocity(&fr.tip_position, qd).as_slice());
        out.extend_from_slice(fr.angular_velocity(qd).as_slice());
    }
    for w in &sim.tip_wrench {
        out.extend_from_slice(w);
    }
    out.extend_from_slice(&sim.applied_torque);
    out
}
