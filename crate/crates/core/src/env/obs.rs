//! Observation layouts.
//!
//! Actor, keypoint variant (75):
//!
//! | offset | len | block                                  |
//! |--------|-----|----------------------------------------|
//! | 0      | 9   | joint positions, scaled to [-1, 1]     |
//! | 9      | 9   | joint velocities, scaled to [-1, 1]    |
//! | 18     | 24  | object keypoints, m                    |
//! | 42     | 24  | goal keypoints, m                      |
//! | 66     | 9   | last action (torque / 0.36)            |
//!
//! The pos-quat variant (41) replaces each 24-block with a 7-block
//! `[tx, ty, tz, qx, qy, qz, qw]`.
//!
//! Critic: the noise-free actor layout followed by object velocity (6),
//! fingertip poses (3 x 7), fingertip velocities (3 x 6), fingertip contact
//! wrenches (3 x 6) and applied joint torques (9), in physical units.

use std::ops::Range;

use super::PoseEncoding;

pub const JOINT_POS: Range<usize> = 0..9;
pub const JOINT_VEL: Range<usize> = 9..18;

/// Joint velocity range used for scaling, rad/s.
pub const JOINT_VEL_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorLayout {
    pub joint_pos: Range<usize>,
    pub joint_vel: Range<usize>,
    pub object_pose: Range<usize>,
    pub goal_pose: Range<usize>,
    pub last_action: Range<usize>,
    pub dim: usize,
}

impl ActorLayout {
    pub fn new(encoding: PoseEncoding) -> Self {
        let p = encoding.pose_dim();
        Self {
            joint_pos: JOINT_POS,
            joint_vel: JOINT_VEL,
            object_pose: 18..18 + p,
            goal_pose: 18 + p..18 + 2 * p,
            last_action: 18 + 2 * p..27 + 2 * p,
            dim: 27 + 2 * p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticLayout {
    pub actor: ActorLayout,
    pub object_velocity: Range<usize>,
    pub fingertip_pose: Range<usize>,
    pub fingertip_velocity: Range<usize>,
    pub fingertip_wrench: Range<usize>,
    pub joint_torque: Range<usize>,
    pub dim: usize,
}

impl CriticLayout {
    pub fn new(encoding: PoseEncoding) -> Self {
        let actor = ActorLayout::new(encoding);
        let a = actor.dim;
        Self {
            object_velocity: a..a + 6,
            fingertip_pose: a + 6..a + 27,
            fingertip_velocity: a + 27..a + 45,
            fingertip_wrench: a + 45..a + 63,
            joint_torque: a + 63..a + 72,
            dim: a + 72,
            actor,
        }
    }
}

/// Map `v` in `[lo, hi]` to `[-1, 1]`.
pub fn scale_to_unit(v: f64, lo: f64, hi: f64) -> f64 {
    2.0 * (v - lo) / (hi - lo) - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_keypoint_layout() {
        let a = ActorLayout::new(PoseEncoding::Keypoints);
        assert_eq!(a.dim, 75);
        assert_eq!((a.joint_pos, a.joint_vel), (0..9, 9..18));
        assert_eq!((a.object_pose, a.goal_pose, a.last_action), (18..42, 42..66, 66..75));
        let c = CriticLayout::new(PoseEncoding::Keypoints);
        assert_eq!(c.dim, 147);
        assert_eq!(c.object_velocity, 75..81);
        assert_eq!(c.fingertip_pose, 81..102);
        assert_eq!(c.fingertip_velocity, 102..120);
        assert_eq!(c.fingertip_wrench, 120..138);
        assert_eq!(c.joint_torque, 138..147);
    }

    #[test]
    fn golden_pos_quat_layout() {
        let a = ActorLayout::new(PoseEncoding::PosQuat);
        assert_eq!(a.dim, 41);
        assert_eq!((a.object_pose, a.goal_pose, a.last_action), (18..25, 25..32, 32..41));
        assert_eq!(CriticLayout::new(PoseEncoding::PosQuat).dim, 113);
    }

    #[test]
    fn unit_scaling() {
        assert_eq!(scale_to_unit(-2.7, -2.7, 1.57), -1.0);
        assert_eq!(scale_to_unit(1.57, -2.7, 1.57), 1.0);
        assert_eq!(scale_to_unit(0.0, -10.0, 10.0), 0.0);
    }
}
