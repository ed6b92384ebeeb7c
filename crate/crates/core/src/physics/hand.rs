//! Three-finger hand geometry and forward kinematics.
//!
//! Each finger has three revolute joints. In the finger's mounting frame
//! (x radial outward, z up) the joints are:
//!
//! - joint 0 at the mount point, axis +x (abduction),
//! - joint 1 at the mount point, axis -y (upper link elevation),
//! - joint 2 at the end of the upper link, axis -y.
//!
//! At zero angles the upper link points radially outward and the lower link
//! hangs straight down, so the fingertip home is at radius
//! `mount_radius + upper_length` and height `mount_height - lower_length`.

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::spatial::{Pose, Quaternion, Vec3};

pub const NUM_FINGERS: usize = 3;
pub const JOINTS_PER_FINGER: usize = 3;
pub const NUM_JOINTS: usize = NUM_FINGERS * JOINTS_PER_FINGER;

/// Joint limits shared by clamping and observation scaling, rad.
pub const JOINT_LOWER: f64 = -2.70;
pub const JOINT_UPPER: f64 = 1.57;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandModel {
    /// Upper link length, m.
    pub upper_length: f64,
    /// Lower link length to the fingertip sphere center, m.
    pub lower_length: f64,
    /// Horizontal distance of each finger mount from the arena center, m.
    pub mount_radius: f64,
    pub mount_height: f64,
    /// Yaw of finger 0's mount; the others follow at +120 and +240 degrees.
    pub mount_yaw_offset: f64,
    pub joint_lower: f64,
    pub joint_upper: f64,
    /// Viscous joint damping, N*m*s/rad, per joint within a finger.
    pub joint_damping: [f64; 3],
    /// Diagonal joint-space inertia, kg*m^2, per joint within a finger.
    pub joint_inertia: [f64; 3],
    pub fingertip_radius: f64,
    /// Joint angles the episode starts from, per joint within a finger.
    pub home: [f64; 3],
}

impl Default for HandModel {
    fn default() -> Self {
        Self {
            upper_length: 0.16,
            lower_length: 0.16,
            mount_radius: 0.04,
            mount_height: 0.29,
            mount_yaw_offset: 0.0,
            joint_lower: JOINT_LOWER,
            joint_upper: JOINT_UPPER,
            joint_damping: [0.05, 0.05, 0.05],
            joint_inertia: [0.006, 0.005, 0.002],
            fingertip_radius: 0.0175,
            home: [0.0, -0.3, -0.6],
        }
    }
}

impl HandModel {
    pub fn mount_yaw(&self, finger: usize) -> f64 {
        self.mount_yaw_offset + finger as f64 * std::f64::consts::TAU / NUM_FINGERS as f64
    }

    pub fn home_joints(&self) -> [f64; NUM_JOINTS] {
        let mut q = [0.0; NUM_JOINTS];
        for f in 0..NUM_FINGERS {
            q[3 * f..3 * f + 3].copy_from_slice(&self.home);
        }
        q
    }

    pub fn damping(&self, joint: usize) -> f64 {
        self.joint_damping[joint % JOINTS_PER_FINGER]
    }

    pub fn inertia(&self, joint: usize) -> f64 {
        self.joint_inertia[joint % JOINTS_PER_FINGER]
    }
}

/// Kinematic quantities of one finger at a joint configuration.
#[derive(Debug, Clone, Copy)]
pub struct FingerFrame {
    pub tip_position: Vec3,
    pub tip_rotation: Matrix3<f64>,
    /// World position of each joint's rotation axis.
    pub joint_origins: [Vec3; 3],
    /// World direction of each joint axis (unit).
    pub joint_axes: [Vec3; 3],
}

impl FingerFrame {
    /// Linear velocity Jacobian column `j` at world point `p` on the last link.
    pub fn linear_column(&self, j: usize, p: &Vec3) -> Vec3 {
        self.joint_axes[j].cross(&(p - self.joint_origins[j]))
    }

    pub fn point_velocity(&self, p: &Vec3, qd: &[f64]) -> Vec3 {
        (0..3).map(|j| self.linear_column(j, p) * qd[j]).sum()
    }

    pub fn angular_velocity(&self, qd: &[f64]) -> Vec3 {
        (0..3).map(|j| self.joint_axes[j] * qd[j]).sum()
    }

    /// Generalized joint forces from a world force applied at world point `p`.
    pub fn joint_forces(&self, force: &Vec3, p: &Vec3) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.linear_column(j, p).dot(force);
        }
        out
    }

    /// Effective translational mass of the fingertip along unit direction `n`.
    pub fn effective_mass(&self, n: &Vec3, inertia: &[f64; 3]) -> f64 {
        let inv: f64 = (0..3)
            .map(|j| {
                let c = self.linear_column(j, &self.tip_position).dot(n);
                c * c / inertia[j]
            })
            .sum();
        if inv > 0.0 {
            1.0 / inv
        } else {
            f64::INFINITY
        }
    }

    pub fn tip_pose(&self) -> Pose {
        Pose::new(self.tip_position, quaternion_from_matrix(&self.tip_rotation))
    }
}

fn rot(axis: &Vec3, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(*axis), angle).into_inner()
}

pub fn finger_kinematics(model: &HandModel, finger: usize, q: &[f64]) -> FingerFrame {
    let mount = rot(&Vec3::z(), model.mount_yaw(finger));
    let base = mount * Vec3::new(model.mount_radius, 0.0, model.mount_height);
    let neg_y = -Vec3::y();

    let axis0 = mount * Vec3::x();
    let r0 = mount * rot(&Vec3::x(), q[0]);
    let axis1 = r0 * neg_y;
    let r1 = r0 * rot(&neg_y, q[1]);
    let elbow = base + r1 * Vec3::new(model.upper_length, 0.0, 0.0);
    let axis2 = r1 * neg_y;
    let r2 = r1 * rot(&neg_y, q[2]);
    let tip = elbow + r2 * Vec3::new(0.0, 0.0, -model.lower_length);

    FingerFrame {
        tip_position: tip,
        tip_rotation: r2,
        joint_origins: [base, base, elbow],
        joint_axes: [axis0, axis1, axis2],
    }
}

/// Fingertip frames for all three fingers from a 9-vector of joint angles.
pub fn forward_kinematics(model: &HandModel, q: &[f64; NUM_JOINTS]) -> [FingerFrame; NUM_FINGERS] {
    std::array::from_fn(|f| finger_kinematics(model, f, &q[3 * f..3 * f + 3]))
}

pub fn quaternion_from_matrix(m: &Matrix3<f64>) -> Quaternion {
    let uq = nalgebra::UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
    let c = uq.quaternion().coords;
    // nalgebra stores (i, j, k, w).
    Quaternion::new(c[0], c[1], c[2], c[3])
}
