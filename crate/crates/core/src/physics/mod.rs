//! Batched simplified rigid-body dynamics for the hand and a free object.
//!
//! Joints use diagonal joint-space inertia with viscous damping (integrated
//! exactly over a substep for constant torque); the object is a free rigid
//! body integrated with semi-implicit Euler. Contacts between fingertip
//! spheres, the object and the table plane use a spring-damper normal force
//! and regularized Coulomb friction.

pub mod hand;

use nalgebra::Matrix3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domrand::{ExternalForceConfig, NoiseOffsets};
use crate::error::{CoreError, Result};
use crate::spatial::{Pose, Quaternion, Vec3};
pub use hand::{forward_kinematics, FingerFrame, HandModel, NUM_FINGERS, NUM_JOINTS};

/// Torque limit of every joint, N*m.
pub const MAX_TORQUE: f64 = 0.36;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectShape {
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
}

impl ObjectShape {
    pub fn cube(half_extent: f64) -> Self {
        ObjectShape::Box { half_extents: [half_extent; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ObjectShape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0 && h.is_finite()),
            ObjectShape::Sphere { radius } => *radius > 0.0 && radius.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidArgument(format!("object dimensions must be positive: {self:?}")))
        }
    }

    pub fn scaled(&self, s: f64) -> ObjectShape {
        match self {
            ObjectShape::Box { half_extents } => ObjectShape::Box { half_extents: half_extents.map(|h| h * s) },
            ObjectShape::Sphere { radius } => ObjectShape::Sphere { radius: radius * s },
        }
    }

    /// Body-frame principal inertia of a uniform solid, kg*m^2.
    pub fn inertia(&self, mass: f64) -> Vec3 {
        match self {
            ObjectShape::Box { half_extents: [a, b, c] } => {
                Vec3::new(b * b + c * c, a * a + c * c, a * a + b * b) * (mass / 3.0)
            }
            ObjectShape::Sphere { radius } => Vec3::repeat(0.4 * mass * radius * radius),
        }
    }

    /// Height of the center above the table when resting unrotated.
    pub fn rest_height(&self) -> f64 {
        match self {
            ObjectShape::Box { half_extents } => half_extents[2],
            ObjectShape::Sphere { radius } => *radius,
        }
    }

    /// Radius of the smallest sphere around the center enclosing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            ObjectShape::Box { half_extents: [a, b, c] } => (a * a + b * b + c * c).sqrt(),
            ObjectShape::Sphere { radius } => *radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub shape: ObjectShape,
    /// Nominal mass, kg.
    pub mass: f64,
    /// Nominal friction coefficient of the object surface.
    pub friction: f64,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self { shape: ObjectShape::cube(0.0325), mass: 0.094, friction: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Control period, s.
    pub dt: f64,
    /// Integration substeps per control period. Penalty contacts need a
    /// substep well below 2/omega of the stiffest contact.
    pub substeps: u32,
    pub gravity: [f64; 3],
    /// Normal spring stiffness per contact point, N/m. A resting 94 g cube on
    /// four corners sinks m*g/(4k) ~ 0.05 mm.
    pub contact_stiffness: f64,
    /// Normal damping per contact point, N*s/m, capped per substep by the
    /// effective mass at the contact.
    pub contact_damping: f64,
    /// Slip speed below which friction is scaled down linearly, m/s.
    pub friction_slip_speed: f64,
    pub table_friction: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    pub hand: HandModel,
    pub object: ObjectConfig,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            substeps: 10,
            gravity: [0.0, 0.0, -9.81],
            contact_stiffness: 5000.0,
            contact_damping: 15.0,
            friction_slip_speed: 1e-3,
            table_friction: 0.8,
            max_linear_speed: 4.0,
            max_angular_speed: 50.0,
            hand: HandModel::default(),
            object: ObjectConfig::default(),
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("contact_stiffness", self.contact_stiffness),
            ("friction_slip_speed", self.friction_slip_speed),
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
            ("object.mass", self.object.mass),
            ("hand.fingertip_radius", self.hand.fingertip_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::InvalidArgument(format!("physics.{name} must be positive, got {v}")));
            }
        }
        if self.substeps == 0 {
            return Err(CoreError::InvalidArgument("physics.substeps must be at least 1".into()));
        }
        if self.contact_damping < 0.0 || self.table_friction < 0.0 || self.object.friction < 0.0 {
            return Err(CoreError::InvalidArgument("physics damping and friction must be non-negative".into()));
        }
        if self.hand.joint_inertia.iter().any(|v| *v <= 0.0) || self.hand.joint_damping.iter().any(|v| *v < 0.0) {
            return Err(CoreError::InvalidArgument("joint inertia must be positive and damping non-negative".into()));
        }
        if self.hand.joint_lower >= self.hand.joint_upper {
            return Err(CoreError::InvalidArgument("joint_lower must be below joint_upper".into()));
        }
        self.object.shape.validate()
    }

    pub fn substep(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}

/// Per-episode physical parameters of one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub object_scale: f64,
    pub object_mass: f64,
    pub object_friction: f64,
    pub table_friction: f64,
    pub offsets: NoiseOffsets,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            object_scale: 1.0,
            object_mass: 1.0,
            object_friction: 1.0,
            table_friction: 1.0,
            offsets: NoiseOffsets::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub pose: Pose,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl ObjectState {
    pub fn at_rest(pose: Pose) -> Self {
        Self { pose, linear_velocity: Vec3::zeros(), angular_velocity: Vec3::zeros() }
    }

    fn is_finite(&self) -> bool {
        self.pose.translation.iter().all(|v| v.is_finite())
            && self.pose.rotation.is_finite()
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }
}

/// Dynamic state of one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSim {
    pub joint_pos: [f64; NUM_JOINTS],
    pub joint_vel: [f64; NUM_JOINTS],
    pub applied_torque: [f64; NUM_JOINTS],
    pub object: ObjectState,
    /// Mean contact force and torque (about the sphere center) on each
    /// fingertip over the last control period.
    pub tip_wrench: [[f64; 6]; NUM_FINGERS],
    /// External force currently acting on the object's center, N.
    pub external_force: Vec3,
    /// Set when the last step produced non-finite values; the state was
    /// rolled back and the environment must be reset.
    pub fault: bool,
}

impl EnvSim {
    pub fn new(joint_pos: [f64; NUM_JOINTS], object: ObjectState) -> Self {
        Self {
            joint_pos,
            joint_vel: [0.0; NUM_JOINTS],
            applied_torque: [0.0; NUM_JOINTS],
            object,
            tip_wrench: [[0.0; 6]; NUM_FINGERS],
            external_force: Vec3::zeros(),
            fault: false,
        }
    }

    fn is_finite(&self) -> bool {
        self.joint_pos.iter().chain(&self.joint_vel).all(|v| v.is_finite()) && self.object.is_finite()
    }
}

/// Batched state of N environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub envs: Vec<EnvSim>,
    pub step: u64,
}

impl SimState {
    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }
}

/// Contact force acting on body A at `point`, given the normal `n` pointing
/// from B into A and the velocity of A relative to B at the contact.
fn contact_force(cfg: &PhysicsConfig, depth: f64, n: &Vec3, rel_vel: &Vec3, mu: f64, m_eff: f64, h: f64) -> Vec3 {
    let vn = rel_vel.dot(n);
    // Damping is capped so one substep cannot reverse the approach velocity.
    let damping = (cfg.contact_damping * vn.abs()).min(m_eff * vn.abs() / h) * vn.signum();
    let normal = (cfg.contact_stiffness * depth - damping).max(0.0);
    let vt = rel_vel - n * vn;
    let speed = vt.norm();
    if speed == 0.0 || mu == 0.0 {
        return n * normal;
    }
    // Regularized Coulomb, capped so one substep cannot reverse the slip.
    let coulomb = mu * normal * speed / (speed * speed + cfg.friction_slip_speed.powi(2)).sqrt();
    let friction = coulomb.min(m_eff * speed / h);
    n * normal - vt * (friction / speed)
}

/// Closest-feature contact between a sphere and the object. Returns
/// `(depth, normal from object to sphere, contact point on object surface)`.
fn sphere_object_contact(shape: &ObjectShape, pose: &Pose, rot: &Matrix3<f64>, center: &Vec3, radius: f64) -> Option<(f64, Vec3, Vec3)> {
    match shape {
        ObjectShape::Sphere { radius: r_obj } => {
            let d = center - pose.translation;
            let dist = d.norm();
            let depth = radius + r_obj - dist;
            if depth <= 0.0 {
                return None;
            }
            let n = if dist > 1e-12 { d / dist } else { Vec3::z() };
            Some((depth, n, pose.translation + n * *r_obj))
        }
        ObjectShape::Box { half_extents } => {
            let local = rot.transpose() * (center - pose.translation);
            let he = Vec3::from(*half_extents);
            let closest = local.zip_map(&he, |v, h| v.clamp(-h, h));
            let diff = local - closest;
            let dist = diff.norm();
            let (depth, n_local, surface) = if dist > 1e-12 {
                if dist >= radius {
                    return None;
                }
                (radius - dist, diff / dist, closest)
            } else {
                // Sphere center inside the box: push out through the nearest face.
                let (k, gap) = (0..3)
                    .map(|k| (k, he[k] - local[k].abs()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                let sign = if local[k] >= 0.0 { 1.0 } else { -1.0 };
                let mut n = Vec3::zeros();
                n[k] = sign;
                let mut s = local;
                s[k] = sign * he[k];
                (radius + gap, n, s)
            };
            Some((depth, rot * n_local, rot * surface + pose.translation))
        }
    }
}

struct Body {
    shape: ObjectShape,
    mass: f64,
    inertia_body: Vec3,
    friction: f64,
    table_friction: f64,
}

impl Body {
    fn new(cfg: &PhysicsConfig, params: &EnvParams) -> Self {
        let shape = cfg.object.shape.scaled(params.object_scale);
        let mass = cfg.object.mass * params.object_mass;
        Self {
            inertia_body: shape.inertia(mass),
            shape,
            mass,
            friction: cfg.object.friction * params.object_friction,
            table_friction: cfg.table_friction * params.table_friction,
        }
    }
}

/// Advance one environment by one control period.
pub fn step_env(env: &mut EnvSim, torques: &[f64; NUM_JOINTS], params: &EnvParams, cfg: &PhysicsConfig) {
    if !torques.iter().all(|t| t.is_finite()) || !env.is_finite() {
        env.fault = true;
        return;
    }
    let saved = env.clone();
    env.fault = false;
    env.applied_torque = *torques;

    let body = Body::new(cfg, params);
    let hand = &cfg.hand;
    let h = cfg.substep();
    let gravity = Vec3::from(cfg.gravity);
    let r_tip = hand.fingertip_radius;
    let obj_tip_mu = body.friction;
    let obj_table_mu = (body.friction * body.table_friction).sqrt();
    let mut wrench_sum = [[0.0; 6]; NUM_FINGERS];

    for _ in 0..cfg.substeps {
        let frames = forward_kinematics(hand, &env.joint_pos);
        let rot = env.object.pose.rotation.to_matrix();
        let com = env.object.pose.translation;
        let inv_inertia_world = rot * Matrix3::from_diagonal(&body.inertia_body.map(|v| 1.0 / v)) * rot.transpose();
        let object_mass_at = |p: &Vec3, dir: &Vec3| {
            let rn = (p - com).cross(dir);
            1.0 / (1.0 / body.mass + rn.dot(&(inv_inertia_world * rn)))
        };
        let mut obj_force = env.external_force + gravity * body.mass;
        let mut obj_torque = Vec3::zeros();
        let mut joint_force = [0.0; NUM_JOINTS];

        for (f, fr) in frames.iter().enumerate() {
            let qd = &env.joint_vel[3 * f..3 * f + 3];
            let c = fr.tip_position;
            let mut tip_force = Vec3::zeros();
            let mut tip_torque = Vec3::zeros();

            if let Some((depth, n, p)) = sphere_object_contact(&body.shape, &env.object.pose, &rot, &c, r_tip) {
                let v_tip = fr.point_velocity(&p, qd);
                let v_obj = env.object.linear_velocity + env.object.angular_velocity.cross(&(p - com));
                let m_tip = fr.effective_mass(&n, &hand.joint_inertia);
                let m_eff = 1.0 / (1.0 / object_mass_at(&p, &n) + 1.0 / m_tip);
                let force = contact_force(cfg, depth, &n, &(v_tip - v_obj), obj_tip_mu, m_eff, h);
                tip_force += force;
                tip_torque += (p - c).cross(&force);
                obj_force -= force;
                obj_torque += (p - com).cross(&(-force));
                let jf = fr.joint_forces(&force, &p);
                for j in 0..3 {
                    joint_force[3 * f + j] += jf[j];
                }
            }

            let depth = r_tip - c.z;
            if depth > 0.0 {
                let p = Vec3::new(c.x, c.y, 0.0);
                let v = fr.point_velocity(&p, qd);
                let m_tip = fr.effective_mass(&Vec3::z(), &hand.joint_inertia);
                let force = contact_force(cfg, depth, &Vec3::z(), &v, body.table_friction, m_tip, h);
                tip_force += force;
                tip_torque += (p - c).cross(&force);
                let jf = fr.joint_forces(&force, &p);
                for j in 0..3 {
                    joint_force[3 * f + j] += jf[j];
                }
            }

            for k in 0..3 {
                wrench_sum[f][k] += tip_force[k];
                wrench_sum[f][3 + k] += tip_torque[k];
            }
        }

        // Object against the table.
        let mut table_contact = |p: Vec3, depth: f64, count: usize| {
            let v = env.object.linear_velocity + env.object.angular_velocity.cross(&(p - com));
            let m_eff = object_mass_at(&p, &Vec3::z()) / count as f64;
            let force = contact_force(cfg, depth, &Vec3::z(), &v, obj_table_mu, m_eff, h);
            obj_force += force;
            obj_torque += (p - com).cross(&force);
        };
        match &body.shape {
            ObjectShape::Box { half_extents } => {
                let corners = crate::spatial::box_local_keypoints(&Vec3::from(*half_extents))
                    .expect("validated object shape");
                let in_contact: Vec<Vec3> = corners
                    .points
                    .iter()
                    .map(|k| rot * k + com)
                    .filter(|p| p.z < 0.0)
                    .collect();
                let count = in_contact.len();
                for p in in_contact {
                    table_contact(p, -p.z, count);
                }
            }
            ObjectShape::Sphere { radius } => {
                let depth = radius - com.z;
                if depth > 0.0 {
                    table_contact(Vec3::new(com.x, com.y, 0.0), depth, 1);
                }
            }
        }

        // Joints: exact damped response to the torque held over the substep.
        for j in 0..NUM_JOINTS {
            let tau = env.applied_torque[j] + joint_force[j];
            let inertia = hand.inertia(j);
            let damping = hand.damping(j);
            let v0 = env.joint_vel[j];
            let v1 = if damping > 0.0 {
                let decay = (-h * damping / inertia).exp();
                v0 * decay + tau / damping * (1.0 - decay)
            } else {
                v0 + h * tau / inertia
            };
            let mut q = env.joint_pos[j] + h * v1;
            let mut v = v1;
            if q < hand.joint_lower {
                q = hand.joint_lower;
                v = v.max(0.0);
            } else if q > hand.joint_upper {
                q = hand.joint_upper;
                v = v.min(0.0);
            }
            env.joint_pos[j] = q;
            env.joint_vel[j] = v;
        }

        // Object: semi-implicit Euler on the free body.
        let obj = &mut env.object;
        obj.linear_velocity += obj_force * (h / body.mass);
        let speed = obj.linear_velocity.norm();
        if speed > cfg.max_linear_speed {
            obj.linear_velocity *= cfg.max_linear_speed / speed;
        }
        let inertia_world = rot * Matrix3::from_diagonal(&body.inertia_body) * rot.transpose();
        let w = obj.angular_velocity;
        let gyro = w.cross(&(inertia_world * w));
        obj.angular_velocity += inv_inertia_world * (obj_torque - gyro) * h;
        let wn = obj.angular_velocity.norm();
        if wn > cfg.max_angular_speed {
            obj.angular_velocity *= cfg.max_angular_speed / wn;
        }
        obj.pose.translation += obj.linear_velocity * h;
        let dq = Quaternion::from_rotation_vector(&(obj.angular_velocity * h));
        obj.pose.rotation = dq.mul(&obj.pose.rotation).normalize();
    }

    let n = cfg.substeps as f64;
    env.tip_wrench = wrench_sum.map(|w| w.map(|v| v / n));

    if !env.is_finite() {
        *env = saved;
        env.fault = true;
    }
}

/// Advance every environment by one control period. Environments are
/// independent, so the batch is stepped in parallel.
pub fn step(state: &mut SimState, torques: &[[f64; NUM_JOINTS]], params: &[EnvParams], cfg: &PhysicsConfig) -> Result<()> {
    let n = state.num_envs();
    if torques.len() != n || params.len() != n {
        return Err(CoreError::InvalidArgument(format!(
            "batch size mismatch: {n} envs, {} torques, {} params",
            torques.len(),
            params.len()
        )));
    }
    state
        .envs
        .par_iter_mut()
        .zip(torques.par_iter())
        .zip(params.par_iter())
        .for_each(|((env, tau), p)| step_env(env, tau, p, cfg));
    state.step += 1;
    Ok(())
}

/// Update the external-force process of one environment: the current force
/// decays geometrically and, with probability `probability`, is replaced by
/// a new force of magnitude `scale * m * g` in a uniformly random direction.
pub fn apply_external_force<R: Rng + ?Sized>(
    env: &mut EnvSim,
    rng: &mut R,
    config: &ExternalForceConfig,
    object_mass: f64,
    gravity: f64,
) {
    if !config.enabled {
        return;
    }
    env.external_force *= config.decay;
    if config.probability > 0.0 && rng.gen::<f64>() < config.probability {
        let dir = loop {
            let v = Vec3::new(crate::rng::normal(rng), crate::rng::normal(rng), crate::rng::normal(rng));
            let n = v.norm();
            if n > 1e-9 {
                break v / n;
            }
        };
        env.external_force = dir * (config.scale * object_mass * gravity);
    }
}

/// Mechanical energy of the object (kinetic + gravitational), J.
pub fn object_energy(obj: &ObjectState, shape: &ObjectShape, mass: f64, gravity: f64) -> f64 {
    let rot = obj.pose.rotation.to_matrix();
    let inertia = rot * Matrix3::from_diagonal(&shape.inertia(mass)) * rot.transpose();
    0.5 * mass * obj.linear_velocity.norm_squared()
        + 0.5 * obj.angular_velocity.dot(&(inertia * obj.angular_velocity))
        + mass * gravity * obj.pose.translation.z
}
