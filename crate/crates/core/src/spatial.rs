//! Quaternion and pose algebra, cube-corner keypoints and reward kernels.
//!
//! Quaternions are stored as `(x, y, z, w)` with `w` the scalar part. Every
//! quantity that depends on orientation is computed through the rotation
//! matrix, whose entries are quadratic in the quaternion components, so `q`
//! and `-q` give bit-identical results.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Self { x, y, z, w }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n * s;
        Self::new(a.x, a.y, a.z, c)
    }

    /// Rotation vector (axis scaled by angle) to quaternion.
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        Self::new(self.x / n, self.y / n, self.z / n, self.w / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(-self.x, -self.y, -self.z, self.w)
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    /// Hamilton product `self * rhs`.
    pub fn mul(&self, r: &Quaternion) -> Quaternion {
        let (ax, ay, az, aw) = (self.x, self.y, self.z, self.w);
        let (bx, by, bz, bw) = (r.x, r.y, r.z, r.w);
        Quaternion::new(
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        )
    }

    pub fn dist_l2(&self, other: &Quaternion) -> f64 {
        let d = [self.x - other.x, self.y - other.y, self.z - other.z, self.w - other.w];
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rotation matrix of the normalized quaternion.
    pub fn to_matrix(&self) -> Matrix3<f64> {
        let q = self.normalize();
        let (x, y, z, w) = (q.x, q.y, q.z, q.w);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let (wx, wy, wz) = (w * x, w * y, w * z);
        Matrix3::new(
            1.0 - 2.0 * (yy + zz),
            2.0 * (xy - wz),
            2.0 * (xz + wy),
            2.0 * (xy + wz),
            1.0 - 2.0 * (xx + zz),
            2.0 * (yz - wx),
            2.0 * (xz - wy),
            2.0 * (yz + wx),
            1.0 - 2.0 * (xx + yy),
        )
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.to_matrix() * v
    }

    /// Uniform sample on SO(3) (subgroup algorithm).
    pub fn random_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let u3: f64 = rng.gen();
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        let t2 = std::f64::consts::TAU * u2;
        let t3 = std::f64::consts::TAU * u3;
        Self::new(a * t2.sin(), a * t2.cos(), b * t3.sin(), b * t3.cos())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.w.is_finite()
    }
}

impl std::ops::Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.x, -self.y, -self.z, -self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: Quaternion,
}

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        translation: Vector3::new(0.0, 0.0, 0.0),
        rotation: Quaternion::IDENTITY,
    };

    pub fn new(translation: Vec3, rotation: Quaternion) -> Self {
        Self { translation, rotation }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.to_matrix() * p + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.normalize().conjugate();
        Pose::new(-(r.rotate(&self.translation)), r)
    }

    /// `[tx, ty, tz, qx, qy, qz, qw]`
    pub fn to_array7(&self) -> [f64; 7] {
        let q = self.rotation;
        let t = self.translation;
        [t.x, t.y, t.z, q.x, q.y, q.z, q.w]
    }
}

pub const NUM_KEYPOINTS: usize = 8;

/// Eight ordered points. Corner `i` of a box has sign `+` on axis `k` iff bit
/// `k` of `i` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub points: [Vec3; NUM_KEYPOINTS],
}

impl KeypointSet {
    pub fn from_flat(flat: &[f64; 24]) -> Self {
        let mut points = [Vec3::zeros(); NUM_KEYPOINTS];
        for (i, p) in points.iter_mut().enumerate() {
            *p = Vec3::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
        }
        Self { points }
    }

    pub fn centroid(&self) -> Vec3 {
        self.points.iter().sum::<Vec3>() / NUM_KEYPOINTS as f64
    }

    /// Sum of corner-wise Euclidean distances.
    pub fn distance_sum(&self, other: &KeypointSet) -> f64 {
        self.points.iter().zip(&other.points).map(|(a, b)| (a - b).norm()).sum()
    }
}

pub fn cube_local_keypoints(half_extent: f64) -> Result<KeypointSet> {
    box_local_keypoints(&Vec3::repeat(half_extent))
}

pub fn box_local_keypoints(half_extents: &Vec3) -> Result<KeypointSet> {
    if !half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
        return Err(CoreError::InvalidArgument(format!(
            "half extents must be positive, got {half_extents:?}"
        )));
    }
    let mut points = [Vec3::zeros(); NUM_KEYPOINTS];
    for (i, p) in points.iter_mut().enumerate() {
        for k in 0..3 {
            p[k] = if i & (1 << k) != 0 { half_extents[k] } else { -half_extents[k] };
        }
    }
    Ok(KeypointSet { points })
}

pub fn pose_to_keypoints(pose: &Pose, local: &KeypointSet) -> KeypointSet {
    let r = pose.rotation.to_matrix();
    let mut points = [Vec3::zeros(); NUM_KEYPOINTS];
    for (out, k) in points.iter_mut().zip(&local.points) {
        *out = r * k + pose.translation;
    }
    KeypointSet { points }
}

pub fn keypoints_to_flat(kps: &KeypointSet) -> [f64; 24] {
    let mut flat = [0.0; 24];
    for (i, p) in kps.points.iter().enumerate() {
        flat[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
    }
    flat
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    /// Scaling factor, 1/m.
    pub a: f64,
    /// Sensitivity offset.
    pub b: f64,
}

impl KernelParams {
    pub const KEYPOINTS: KernelParams = KernelParams { a: 30.0, b: 2.0 };
    pub const POS_QUAT: KernelParams = KernelParams { a: 50.0, b: 2.0 };

    pub fn validate(&self) -> Result<()> {
        if self.a > 0.0 && self.b >= 0.0 {
            Ok(())
        } else {
            Err(CoreError::InvalidArgument(format!("kernel params need a > 0, b >= 0: {self:?}")))
        }
    }
}

/// `K(x) = 1 / (e^{ax} + b + e^{-ax})`, bounded by `1 / (b + 2)`.
pub fn logistic_kernel(x: f64, p: &KernelParams) -> f64 {
    let ax = p.a * x.abs();
    // e^{ax} overflows long before the kernel stops being representable as 0.
    if ax > 700.0 {
        return 0.0;
    }
    1.0 / (ax.exp() + p.b + (-ax).exp())
}

/// Angle between two orientations, from the vector part of `q1 * q2^*`.
pub fn rot_dist(q1: &Quaternion, q2: &Quaternion) -> f64 {
    let (a, b) = (q1.normalize(), q2.normalize());
    // Vector part of a * b^*, arranged so identical or negated inputs cancel exactly.
    let (va, vb) = (a.vector(), b.vector());
    let v = (va * b.w - vb * a.w) - va.cross(&vb);
    2.0 * v.norm().min(1.0).asin()
}

/// Keep the sign of a tracked quaternion temporally consistent.
pub fn quat_sign_filter(q_new: &Quaternion, q_last: &Quaternion) -> Quaternion {
    let flipped = -*q_new;
    if q_last.dist_l2(&flipped) < 0.2 {
        flipped
    } else {
        *q_new
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const H: f64 = 0.0325;

    fn arb_quat() -> impl Strategy<Value = Quaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(x, y, z, w)| x * x + y * y + z * z + w * w > 1e-3)
            .prop_map(|(x, y, z, w)| Quaternion::new(x, y, z, w).normalize())
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (arb_quat(), -0.3..0.3f64, -0.3..0.3f64, 0.0..0.3f64)
            .prop_map(|(q, x, y, z)| Pose::new(Vec3::new(x, y, z), q))
    }

    #[test]
    fn local_keypoints_order_and_centroid() {
        let k = cube_local_keypoints(0.5).unwrap();
        assert_eq!(k.points[0], Vec3::new(-0.5, -0.5, -0.5));
        assert_eq!(k.points[7], Vec3::new(0.5, 0.5, 0.5));
        assert_eq!(k.points[1], Vec3::new(0.5, -0.5, -0.5));
        assert_eq!(k.points[4], Vec3::new(-0.5, -0.5, 0.5));
        assert_eq!(k.centroid(), Vec3::zeros());
        let k = cube_local_keypoints(H).unwrap();
        assert!(k.points.iter().all(|p| p.iter().all(|c| c.abs() == H)));
    }

    #[test]
    fn non_positive_half_extent_rejected() {
        assert!(matches!(cube_local_keypoints(0.0), Err(CoreError::InvalidArgument(_))));
        assert!(cube_local_keypoints(-1.0).is_err());
        assert!(cube_local_keypoints(f64::NAN).is_err());
    }

    #[test]
    fn identity_and_translation() {
        let local = cube_local_keypoints(H).unwrap();
        assert_eq!(pose_to_keypoints(&Pose::IDENTITY, &local), local);
        let shifted = pose_to_keypoints(&Pose::new(Vec3::new(0.1, 0.0, 0.0), Quaternion::IDENTITY), &local);
        for (a, b) in shifted.points.iter().zip(&local.points) {
            assert_eq!(*a, b + Vec3::new(0.1, 0.0, 0.0));
        }
    }

    #[test]
    fn quarter_turn_about_z_matches_matrix_oracle() {
        let local = cube_local_keypoints(H).unwrap();
        let q = Quaternion::from_axis_angle(&Vec3::z(), PI / 2.0);
        let out = pose_to_keypoints(&Pose::new(Vec3::zeros(), q), &local);
        let oracle = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        for (o, k) in out.points.iter().zip(&local.points) {
            assert_relative_eq!(*o, oracle * k, epsilon = 1e-15);
        }
        // Corner (-,-,-) lands on (+,-,-).
        assert_relative_eq!(out.points[0], local.points[1], epsilon = 1e-15);
    }

    #[test]
    fn flat_layout() {
        let mut local = cube_local_keypoints(H).unwrap();
        local.points[0] = Vec3::new(1.0, 2.0, 3.0);
        let flat = keypoints_to_flat(&local);
        assert_eq!(&flat[0..3], &[1.0, 2.0, 3.0]);
        assert_eq!(KeypointSet::from_flat(&flat), local);
        let flat = keypoints_to_flat(&cube_local_keypoints(H).unwrap());
        assert!(flat.iter().all(|v| v.abs() == H));
    }

    #[test]
    fn kernel_values() {
        let kp = KernelParams::KEYPOINTS;
        assert_eq!(logistic_kernel(0.0, &kp), 0.25);
        let expected = 1.0 / (3f64.exp() + 2.0 + (-3f64).exp());
        assert_relative_eq!(logistic_kernel(0.1, &kp), expected, max_relative = 1e-15);
        assert_relative_eq!(logistic_kernel(0.1, &kp), 0.04518, epsilon = 1e-5);
        assert!(logistic_kernel(1.0, &KernelParams::POS_QUAT) < 1e-20);
        assert_eq!(logistic_kernel(0.3, &kp), logistic_kernel(-0.3, &kp));
        assert_eq!(logistic_kernel(1e6, &kp), 0.0);
    }

    #[test]
    fn kernel_monotone_on_grid() {
        for p in [KernelParams::KEYPOINTS, KernelParams::POS_QUAT, KernelParams { a: 1.0, b: 0.0 }] {
            let mut last = logistic_kernel(0.0, &p);
            for i in 1..20_000 {
                let v = logistic_kernel(i as f64 * 1e-4, &p);
                assert!(v < last || v == 0.0, "not decreasing at {i}");
                last = v;
            }
        }
    }

    #[test]
    fn rot_dist_examples() {
        let q = Quaternion::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7);
        assert_eq!(rot_dist(&q, &q), 0.0);
        assert_eq!(rot_dist(&q, &-q), 0.0);
        let half_turn = Quaternion::from_axis_angle(&Vec3::z(), PI);
        assert_relative_eq!(rot_dist(&half_turn, &Quaternion::IDENTITY), PI, epsilon = 1e-12);
        // Axis-angle oracle: the angle used to construct the rotation.
        for angle in [0.1, 0.5, 1.0, 2.0, 3.0] {
            let r = Quaternion::from_axis_angle(&Vec3::new(0.3, -1.0, 0.2), angle);
            assert_relative_eq!(rot_dist(&r.mul(&q), &q), angle, epsilon = 1e-9);
        }
    }

    #[test]
    fn sign_filter_examples() {
        let q_last = Quaternion::from_axis_angle(&Vec3::new(1.0, 0.0, 1.0), 0.4);
        assert_eq!(quat_sign_filter(&-q_last, &q_last), q_last);
        assert_eq!(quat_sign_filter(&q_last, &q_last), q_last);
        // q_new with -q_new at distance 0.1 from q_last.
        let dir = Quaternion::new(0.5, -0.5, 0.5, 0.5);
        let off = Quaternion::new(
            q_last.x + 0.1 * dir.x,
            q_last.y + 0.1 * dir.y,
            q_last.z + 0.1 * dir.z,
            q_last.w + 0.1 * dir.w,
        );
        let q_new = -off;
        assert_relative_eq!(q_last.dist_l2(&-q_new), 0.1, epsilon = 1e-12);
        assert_eq!(quat_sign_filter(&q_new, &q_last), -q_new);
        // Far from both signs: left alone.
        let far = Quaternion::from_axis_angle(&Vec3::y(), 2.0);
        assert_eq!(quat_sign_filter(&far, &q_last), far);
    }

    #[test]
    fn uniform_so3_is_unit() {
        let mut rng = crate::rng::stream(1, crate::rng::Purpose::Goal, 0, 0);
        for _ in 0..1000 {
            assert!((Quaternion::random_uniform(&mut rng).norm() - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn keypoints_double_cover_bit_identical(pose in arb_pose()) {
            let local = cube_local_keypoints(H).unwrap();
            let flipped = Pose::new(pose.translation, -pose.rotation);
            prop_assert_eq!(pose_to_keypoints(&pose, &local), pose_to_keypoints(&flipped, &local));
        }

        #[test]
        fn keypoints_rigid(pose in arb_pose()) {
            let kp = pose_to_keypoints(&pose, &cube_local_keypoints(H).unwrap());
            for i in 0..8 {
                for k in 0..3 {
                    let j = i ^ (1 << k);
                    prop_assert!(((kp.points[i] - kp.points[j]).norm() - 2.0 * H).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn inverse_pose_recovers_local(pose in arb_pose()) {
            let local = cube_local_keypoints(H).unwrap();
            let world = pose_to_keypoints(&pose, &local);
            let back = pose_to_keypoints(&pose.inverse(), &world);
            for (a, b) in back.points.iter().zip(&local.points) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }

        #[test]
        fn keypoint_distance_zero_iff_same_pose(a in arb_pose(), b in arb_pose()) {
            let local = cube_local_keypoints(H).unwrap();
            let ka = pose_to_keypoints(&a, &local);
            prop_assert!(ka.distance_sum(&pose_to_keypoints(&Pose::new(a.translation, -a.rotation), &local)) == 0.0);
            let kb = pose_to_keypoints(&b, &local);
            let same = (a.translation - b.translation).norm() < 1e-9 && rot_dist(&a.rotation, &b.rotation) < 1e-6;
            prop_assert_eq!(ka.distance_sum(&kb) < 1e-9, same);
        }

        #[test]
        fn rot_dist_metric(a in arb_quat(), b in arb_quat(), c in arb_quat()) {
            let ab = rot_dist(&a, &b);
            prop_assert!((0.0..=PI + 1e-12).contains(&ab));
            prop_assert!((ab - rot_dist(&b, &a)).abs() < 1e-6);
            prop_assert!((ab - rot_dist(&-a, &b)).abs() < 1e-12);
            prop_assert!(rot_dist(&a, &c) <= ab + rot_dist(&b, &c) + 1e-6);
        }
    }
}
