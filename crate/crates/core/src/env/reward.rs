use serde::{Deserialize, Serialize};

use crate::physics::NUM_FINGERS;
use crate::spatial::{
    cube_local_keypoints, logistic_kernel, pose_to_keypoints, rot_dist, KernelParams, KeypointSet, Pose, Vec3,
};

use super::{PoseEncoding, TaskConfig};

/// Unweighted reward terms of one step plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub fingertip_to_object: f64,
    pub fingertip_velocity_penalty: f64,
    pub object_goal_reward: f64,
    /// Whether the fingertip term was active (curriculum).
    pub approach_active: bool,
    pub total: f64,
}

/// Weighted contribution of each term to the total reward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightedReward {
    pub fingertip_to_object: f64,
    pub fingertip_velocity: f64,
    pub object_goal: f64,
}

impl RewardBreakdown {
    /// Per-term contributions; the approach term is exactly zero once the
    /// curriculum has switched it off.
    pub fn weighted(&self, cfg: &TaskConfig) -> WeightedReward {
        WeightedReward {
            fingertip_to_object: if self.approach_active { cfg.w_fingertip_to_object * self.fingertip_to_object } else { 0.0 },
            fingertip_velocity: cfg.w_fingertip_velocity * self.fingertip_velocity_penalty,
            object_goal: cfg.w_object_goal * self.object_goal_reward,
        }
    }
}

/// Fingertip positions and object centroid at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSnapshot {
    pub tips: [Vec3; NUM_FINGERS],
    pub centroid: Vec3,
}

/// Sum over fingertips of the change in distance to the object centroid.
/// Negative when the fingertips approach.
pub fn fingertip_to_object(prev: &ContactSnapshot, curr: &ContactSnapshot) -> f64 {
    (0..NUM_FINGERS)
        .map(|i| (curr.tips[i] - curr.centroid).norm() - (prev.tips[i] - prev.centroid).norm())
        .sum()
}

pub fn fingertip_velocity_penalty(tip_velocities: &[Vec3; NUM_FINGERS]) -> f64 {
    tip_velocities.iter().map(|v| v.norm_squared()).sum()
}

pub fn keypoint_goal_reward(current: &KeypointSet, target: &KeypointSet, kernel: &KernelParams) -> f64 {
    current
        .points
        .iter()
        .zip(&target.points)
        .map(|(c, t)| logistic_kernel((c - t).norm(), kernel))
        .sum()
}

pub fn pos_quat_goal_reward(current: &Pose, target: &Pose, kernel: &KernelParams) -> f64 {
    let pos = logistic_kernel((current.translation - target.translation).norm(), kernel);
    pos + 1.0 / (3.0 * rot_dist(&current.rotation, &target.rotation).abs() + 0.01)
}

/// Object-to-goal term for the configured reward variant.
pub fn object_goal_reward(object: &Pose, goal: &Pose, cfg: &TaskConfig) -> f64 {
    match cfg.reward {
        PoseEncoding::Keypoints => {
            let local = cube_local_keypoints(cfg.keypoint_half_extent).expect("validated half extent");
            keypoint_goal_reward(&pose_to_keypoints(object, &local), &pose_to_keypoints(goal, &local), &cfg.keypoint_kernel)
        }
        PoseEncoding::PosQuat => pos_quat_goal_reward(object, goal, &cfg.pos_quat_kernel),
    }
}

pub fn compute_reward(
    prev: &ContactSnapshot,
    curr: &ContactSnapshot,
    tip_velocities: &[Vec3; NUM_FINGERS],
    object: &Pose,
    goal: &Pose,
    global_step: u64,
    cfg: &TaskConfig,
) -> RewardBreakdown {
    let fto = fingertip_to_object(prev, curr);
    let fvp = fingertip_velocity_penalty(tip_velocities);
    let ogr = object_goal_reward(object, goal, cfg);
    let approach_active = global_step <= cfg.curriculum_cutoff;
    let gate = if approach_active { 1.0 } else { 0.0 };
    let total = cfg.w_fingertip_to_object * fto * gate + cfg.w_fingertip_velocity * fvp + cfg.w_object_goal * ogr;
    RewardBreakdown {
        fingertip_to_object: fto,
        fingertip_velocity_penalty: fvp,
        object_goal_reward: ogr,
        approach_active,
        total,
    }
}
