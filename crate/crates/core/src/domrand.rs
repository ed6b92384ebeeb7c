//! Domain randomization: observation and action noise, per-episode physical
//! parameter scaling and the external-force schedule.
//!
//! Each noisy channel gets a fresh Gaussian draw every step (`sigma`) plus an
//! offset drawn once per episode (`sigma_corr`). Observation channels are then
//! clamped to their listed range.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::physics::{EnvParams, MAX_TORQUE, NUM_JOINTS};
use crate::rng::normal;
use crate::spatial::{Pose, Quaternion, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Std of the per-step draw.
    pub sigma: f64,
    /// Std of the per-episode offset.
    pub sigma_corr: f64,
    /// Clamp applied after noise, `[lo, hi]`.
    pub range: Option<[f64; 2]>,
}

impl NoiseSpec {
    pub const fn new(sigma: f64, sigma_corr: f64, lo: f64, hi: f64) -> Self {
        Self { sigma, sigma_corr, range: Some([lo, hi]) }
    }

    pub const fn off(&self) -> Self {
        Self { sigma: 0.0, sigma_corr: 0.0, range: self.range }
    }

    fn clamp(&self, v: f64) -> f64 {
        match self.range {
            Some([lo, hi]) => v.clamp(lo, hi),
            None => v,
        }
    }
}

/// Random forces on the object. The defaults are a reconstruction, not
/// measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalForceConfig {
    pub enabled: bool,
    /// Per-step probability of starting a new force.
    pub probability: f64,
    /// Force magnitude as a multiple of the object's weight.
    pub scale: f64,
    /// Per-step multiplicative decay of the active force.
    pub decay: f64,
}

impl Default for ExternalForceConfig {
    fn default() -> Self {
        Self { enabled: true, probability: 0.1, scale: 0.5, decay: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrConfig {
    /// Master switch. Off means every sigma is zero and every factor is 1.
    pub enabled: bool,
    pub cube_position: NoiseSpec,
    /// Angle std of a rotation about a uniformly random axis, rad.
    pub cube_orientation: NoiseSpec,
    pub joint_position: NoiseSpec,
    pub joint_velocity: NoiseSpec,
    pub torque: NoiseSpec,
    pub object_scale: [f64; 2],
    pub object_mass: [f64; 2],
    pub object_friction: [f64; 2],
    pub table_friction: [f64; 2],
    pub external_force: ExternalForceConfig,
}

impl Default for DrConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl DrConfig {
    pub fn paper() -> Self {
        Self {
            enabled: true,
            cube_position: NoiseSpec::new(0.002, 0.0, -0.30, 0.30),
            cube_orientation: NoiseSpec::new(0.020, 0.0, -1.00, 1.00),
            joint_position: NoiseSpec::new(0.003, 0.004, -2.70, 1.57),
            joint_velocity: NoiseSpec::new(0.003, 0.004, -10.0, 10.0),
            torque: NoiseSpec::new(0.02, 0.01, -MAX_TORQUE, MAX_TORQUE),
            object_scale: [0.97, 1.03],
            object_mass: [0.70, 1.30],
            object_friction: [0.70, 1.30],
            table_friction: [0.50, 1.50],
            external_force: ExternalForceConfig::default(),
        }
    }

    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::paper() }
    }

    /// The configuration actually in force, honoring the master switch.
    pub fn effective(&self) -> DrConfig {
        if self.enabled {
            return self.clone();
        }
        DrConfig {
            enabled: false,
            cube_position: self.cube_position.off(),
            cube_orientation: self.cube_orientation.off(),
            joint_position: self.joint_position.off(),
            joint_velocity: self.joint_velocity.off(),
            torque: self.torque.off(),
            object_scale: [1.0, 1.0],
            object_mass: [1.0, 1.0],
            object_friction: [1.0, 1.0],
            table_friction: [1.0, 1.0],
            external_force: ExternalForceConfig { enabled: false, ..self.external_force },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("cube_position", &self.cube_position),
            ("cube_orientation", &self.cube_orientation),
            ("joint_position", &self.joint_position),
            ("joint_velocity", &self.joint_velocity),
            ("torque", &self.torque),
        ] {
            if !(s.sigma >= 0.0 && s.sigma_corr >= 0.0) {
                return Err(CoreError::InvalidArgument(format!("dr.{name}: sigmas must be non-negative")));
            }
            if let Some([lo, hi]) = s.range {
                if lo > hi {
                    return Err(CoreError::InvalidArgument(format!("dr.{name}: empty range")));
                }
            }
        }
        for (name, [lo, hi]) in [
            ("object_scale", self.object_scale),
            ("object_mass", self.object_mass),
            ("object_friction", self.object_friction),
            ("table_friction", self.table_friction),
        ] {
            if !(lo > 0.0 && lo <= hi) {
                return Err(CoreError::InvalidArgument(format!("dr.{name}: need 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        let f = &self.external_force;
        if !(0.0..=1.0).contains(&f.probability) || !(0.0..=1.0).contains(&f.decay) || f.scale < 0.0 {
            return Err(CoreError::InvalidArgument("dr.external_force: probability and decay in [0,1], scale >= 0".into()));
        }
        Ok(())
    }
}

/// Per-episode correlated noise offsets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseOffsets {
    pub cube_position: [f64; 3],
    /// Rotation vector, rad.
    pub cube_orientation: [f64; 3],
    pub joint_position: [f64; NUM_JOINTS],
    pub joint_velocity: [f64; NUM_JOINTS],
    pub torque: [f64; NUM_JOINTS],
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(normal(rng), normal(rng), normal(rng));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Rotation about a uniform random axis with angle ~ N(0, sigma^2), as a
/// rotation vector. Zero sigma consumes no randomness.
fn random_rotation_vector<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::zeros();
    }
    let axis = random_unit(rng);
    axis * (sigma * normal(rng))
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        sigma * normal(rng)
    }
}

/// Draw the physical scaling factors and correlated noise offsets for one
/// episode.
pub fn sample_episode_randomization<R: Rng + ?Sized>(cfg: &DrConfig, rng: &mut R) -> EnvParams {
    let cfg = cfg.effective();
    let object_scale = uniform(rng, cfg.object_scale);
    let object_mass = uniform(rng, cfg.object_mass);
    let object_friction = uniform(rng, cfg.object_friction);
    let table_friction = uniform(rng, cfg.table_friction);
    let mut offsets = NoiseOffsets::default();
    for v in &mut offsets.cube_position {
        *v = gaussian(rng, cfg.cube_position.sigma_corr);
    }
    let rv = random_rotation_vector(rng, cfg.cube_orientation.sigma_corr);
    offsets.cube_orientation = [rv.x, rv.y, rv.z];
    for v in &mut offsets.joint_position {
        *v = gaussian(rng, cfg.joint_position.sigma_corr);
    }
    for v in &mut offsets.joint_velocity {
        *v = gaussian(rng, cfg.joint_velocity.sigma_corr);
    }
    for v in &mut offsets.torque {
        *v = gaussian(rng, cfg.torque.sigma_corr);
    }
    EnvParams { object_scale, object_mass, object_friction, table_friction, offsets }
}

/// `value + offset + N(0, sigma^2)`, clamped to the channel range.
pub fn apply_observation_noise<R: Rng + ?Sized>(values: &mut [f64], spec: &NoiseSpec, offsets: &[f64], rng: &mut R) {
    debug_assert_eq!(values.len(), offsets.len());
    for (v, off) in values.iter_mut().zip(offsets) {
        *v = spec.clamp(*v + off + gaussian(rng, spec.sigma));
    }
}

/// Noise on the object pose, applied in the world frame before any keypoint
/// conversion: additive on position, a random-axis rotation on orientation.
pub fn noisy_pose<R: Rng + ?Sized>(pose: &Pose, cfg: &DrConfig, offsets: &NoiseOffsets, rng: &mut R) -> Pose {
    let mut t = [pose.translation.x, pose.translation.y, pose.translation.z];
    apply_observation_noise(&mut t, &cfg.cube_position, &offsets.cube_position, rng);
    let spec = &cfg.cube_orientation;
    let fresh = random_rotation_vector(rng, spec.sigma);
    let corr = Quaternion::from_rotation_vector(&Vec3::from(offsets.cube_orientation));
    let q = Quaternion::from_rotation_vector(&fresh).mul(&corr).mul(&pose.rotation);
    let q = Quaternion::new(spec.clamp(q.x), spec.clamp(q.y), spec.clamp(q.z), spec.clamp(q.w)).normalize();
    Pose::new(Vec3::from(t), q)
}

/// Additive torque noise followed by the torque clamp.
pub fn apply_action_noise<R: Rng + ?Sized>(
    torques: &mut [f64; NUM_JOINTS],
    spec: &NoiseSpec,
    offsets: &[f64; NUM_JOINTS],
    rng: &mut R,
) {
    for (t, off) in torques.iter_mut().zip(offsets) {
        let noised = *t + off + gaussian(rng, spec.sigma);
        *t = noised.clamp(-MAX_TORQUE, MAX_TORQUE);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use crate::spatial::{cube_local_keypoints, pose_to_keypoints};

    fn std_of(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    }

    #[test]
    fn disabled_pins_everything() {
        let mut rng = stream(1, Purpose::Episode, 0, 0);
        let p = sample_episode_randomization(&DrConfig::disabled(), &mut rng);
        assert_eq!(p, EnvParams::default());
        let eff = DrConfig::disabled().effective();
        assert_eq!(eff.torque.sigma, 0.0);
        assert!(!eff.external_force.enabled);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let spec = NoiseSpec::new(0.0, 0.0, -10.0, 10.0);
        let mut rng = stream(1, Purpose::ObsNoise, 0, 0);
        let mut v = [0.1, -0.2, 3.0];
        apply_observation_noise(&mut v, &spec, &[0.0; 3], &mut rng);
        assert_eq!(v, [0.1, -0.2, 3.0]);
        let mut t = [0.1; 9];
        apply_action_noise(&mut t, &spec, &[0.0; 9], &mut rng);
        assert_eq!(t, [0.1; 9]);
        let cfg = DrConfig::disabled().effective();
        let pose = Pose::new(Vec3::new(0.01, 0.02, 0.03), Quaternion::from_axis_angle(&Vec3::x(), 0.3));
        assert_eq!(noisy_pose(&pose, &cfg, &NoiseOffsets::default(), &mut rng).translation, pose.translation);
    }

    #[test]
    fn torque_clamp_holds_at_limit() {
        let spec = DrConfig::paper().torque;
        let mut rng = stream(2, Purpose::ActionNoise, 0, 0);
        for _ in 0..1000 {
            let mut t = [MAX_TORQUE; 9];
            apply_action_noise(&mut t, &spec, &[0.05; 9], &mut rng);
            assert!(t.iter().all(|v| *v <= MAX_TORQUE));
        }
    }

    #[test]
    fn scale_draws_stay_in_range() {
        let cfg = DrConfig::paper();
        let draws: Vec<f64> = (0..100_000)
            .map(|i| sample_episode_randomization(&cfg, &mut stream(5, Purpose::Episode, 0, i)).object_scale)
            .collect();
        let (lo, hi) = draws.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(lo >= 0.97 && hi <= 1.03);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() < 1e-3);
    }

    #[test]
    fn position_noise_std() {
        let cfg = DrConfig::paper();
        let mut rng = stream(6, Purpose::ObsNoise, 0, 0);
        let resid: Vec<f64> = (0..100_000)
            .map(|_| {
                let mut v = [0.05];
                apply_observation_noise(&mut v, &cfg.cube_position, &[0.0], &mut rng);
                v[0] - 0.05
            })
            .collect();
        assert!((std_of(&resid) / 0.002 - 1.0).abs() < 0.05);
    }

    #[test]
    fn noised_keypoints_stay_rigid() {
        let cfg = DrConfig::paper();
        let local = cube_local_keypoints(0.0325).unwrap();
        let mut rng = stream(7, Purpose::ObsNoise, 0, 0);
        let pose = Pose::new(Vec3::new(0.02, -0.01, 0.05), Quaternion::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 0.9));
        for _ in 0..100 {
            let kp = pose_to_keypoints(&noisy_pose(&pose, &cfg, &NoiseOffsets::default(), &mut rng), &local);
            for i in 0..8 {
                for k in 0..3 {
                    let d = (kp.points[i] - kp.points[i ^ (1 << k)]).norm();
                    assert!((d - 0.065).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn orientation_noise_is_sign_covariant() {
        let cfg = DrConfig::paper();
        let pose = Pose::new(Vec3::zeros(), Quaternion::from_axis_angle(&Vec3::y(), 1.1));
        let flipped = Pose::new(Vec3::zeros(), -pose.rotation);
        let a = noisy_pose(&pose, &cfg, &NoiseOffsets::default(), &mut stream(1, Purpose::ObsNoise, 0, 3));
        let b = noisy_pose(&flipped, &cfg, &NoiseOffsets::default(), &mut stream(1, Purpose::ObsNoise, 0, 3));
        assert_eq!(a.rotation, -b.rotation);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = DrConfig::paper();
        c.torque.sigma = -1.0;
        assert!(c.validate().is_err());
        let mut c = DrConfig::paper();
        c.object_mass = [1.3, 0.7];
        assert!(c.validate().is_err());
        assert!(DrConfig::paper().validate().is_ok());
    }
}
