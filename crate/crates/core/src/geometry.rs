// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The tiltrio authors.

//! Rotation and planar rigid-transform algebra.
//!
//! Attitudes are body-to-world unit quaternions: `q.rotate(v_body)` yields the
//! world-frame vector. Euler angles follow the intrinsic ZYX (yaw, pitch, roll)
//! convention, so `q = Rz(yaw) * Ry(pitch) * Rx(roll)`. A positive pitch tips
//! the body x axis below the horizon.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector2, Vector3};

/// Dot products above this switch slerp to normalized linear interpolation.
const SLERP_NLERP_THRESHOLD: f64 = 0.9995;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// A rotation stored as a unit quaternion `(w, x, y, z)`.
///
/// `q` and `-q` describe the same rotation; use [`UnitQuat::approx_eq`] for
/// comparisons and [`UnitQuat::canonical`] when a unique sign is required.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuat {
    pub const fn identity() -> Self {
        Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 }
    }

    /// Builds a quaternion from raw components, normalizing and choosing the
    /// `w >= 0` representative.
    ///
    /// Panics if all components are zero or non-finite.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        assert!(n.is_finite() && n > 0.0, "quaternion components must be finite and non-zero");
        Self { w: w / n, x: x / n, y: y / n, z: z / n }.canonical()
    }

    fn from_raw_normalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let (s, c) = (angle * 0.5).sin_cos();
        let a = axis / n;
        Self::from_raw_normalized(c, a.x * s, a.y * s, a.z * s)
    }

    /// Exponential map: rotation by `|v|` radians about `v`.
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    /// ZYX composition `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = (roll * 0.5).sin_cos();
        let (sp, cp) = (pitch * 0.5).sin_cos();
        let (sy, cy) = (yaw * 0.5).sin_cos();
        Self::from_raw_normalized(
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        )
    }

    pub fn from_yaw(yaw: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), yaw)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// The same rotation with `w >= 0`.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            self.negated()
        } else {
            self
        }
    }

    /// The opposite representative `-q` of the same rotation.
    pub fn negated(self) -> Self {
        Self { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn inverse(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Returns whichever of `self` / `-self` lies on the hemisphere of `reference`.
    pub fn aligned_to(self, reference: &Self) -> Self {
        if self.dot(reference) < 0.0 {
            self.negated()
        } else {
            self
        }
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = Vector3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Rotation angle in `[0, pi]` and unit axis. The identity reports the x axis.
    pub fn axis_angle(&self) -> (Vector3<f64>, f64) {
        let q = self.canonical();
        let v = Vector3::new(q.x, q.y, q.z);
        let s = v.norm();
        if s < 1e-15 {
            return (Vector3::x(), 0.0);
        }
        (v / s, 2.0 * s.atan2(q.w))
    }

    /// Logarithm map: the rotation vector `axis * angle`.
    pub fn to_rotation_vector(&self) -> Vector3<f64> {
        let (axis, angle) = self.axis_angle();
        axis * angle
    }

    /// Geodesic angle between two rotations, in `[0, pi]`.
    pub fn angle_to(&self, other: &Self) -> f64 {
        (self.inverse() * *other).axis_angle().1
    }

    /// Rotation equality up to the double cover.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.angle_to(other) <= tol
    }

    /// ZYX Euler angles `(roll, pitch, yaw)`.
    ///
    /// At gimbal lock (`|pitch| = pi/2`) roll is reported as zero.
    pub fn to_rpy(&self) -> (f64, f64, f64) {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let sinp = 2.0 * (w * y - z * x);
        if sinp.abs() >= 1.0 - 1e-12 {
            let m = self.to_rotation_matrix();
            let pitch = PI / 2.0 * sinp.signum();
            let yaw = (-m[(0, 1)]).atan2(m[(1, 1)]);
            return (0.0, pitch, normalize_angle(yaw));
        }
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let pitch = sinp.asin();
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        (normalize_angle(roll), pitch, normalize_angle(yaw))
    }

    pub fn yaw(&self) -> f64 {
        self.to_rpy().2
    }

    /// The roll/pitch part `Ry(pitch) * Rx(roll)` with yaw removed.
    pub fn tilt_only(&self) -> Self {
        let (roll, pitch, _) = self.to_rpy();
        Self::from_rpy(roll, pitch, 0.0)
    }

    /// Quaternion derivative helper: `q ⊗ (0, v)`.
    pub(crate) fn mul_pure(&self, v: &Vector3<f64>) -> [f64; 4] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            -x * v.x - y * v.y - z * v.z,
            w * v.x + y * v.z - z * v.y,
            w * v.y - x * v.z + z * v.x,
            w * v.z + x * v.y - y * v.x,
        ]
    }

    /// Adds a raw 4-vector to the quaternion and renormalizes.
    pub(crate) fn add_and_normalize(&self, d: [f64; 4]) -> Self {
        Self::from_raw_normalized(self.w + d[0], self.x + d[1], self.y + d[2], self.z + d[3])
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;

    fn mul(self, r: UnitQuat) -> UnitQuat {
        let l = self;
        UnitQuat::from_raw_normalized(
            l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z,
            l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y,
            l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x,
            l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w,
        )
    }
}

/// Spherical linear interpolation along the shorter arc.
pub fn slerp(q0: &UnitQuat, q1: &UnitQuat, t: f64) -> UnitQuat {
    debug_assert!((0.0..=1.0).contains(&t), "slerp parameter {t} outside [0, 1]");
    let mut d = q0.dot(q1);
    let q1 = if d < 0.0 {
        d = -d;
        q1.negated()
    } else {
        *q1
    };
    let (a, b) = if d > SLERP_NLERP_THRESHOLD {
        (1.0 - t, t)
    } else {
        let theta = d.acos();
        let s = theta.sin();
        (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s)
    };
    UnitQuat::from_raw_normalized(a * q0.w + b * q1.w, a * q0.x + b * q1.x, a * q0.y + b * q1.y, a * q0.z + b * q1.z)
}

/// ZYX Euler angles of `q`; see [`UnitQuat::to_rpy`].
pub fn quat_to_rpy(q: &UnitQuat) -> (f64, f64, f64) {
    q.to_rpy()
}

/// Roll/pitch difference between two attitudes, as a rotation about a
/// horizontal axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeTilt {
    axis: Vector3<f64>,
    angle: f64,
}

impl Default for RelativeTilt {
    fn default() -> Self {
        Self::none()
    }
}

impl RelativeTilt {
    /// Zero tilt with the conventional x axis.
    pub fn none() -> Self {
        Self { axis: Vector3::x(), angle: 0.0 }
    }

    /// Tilt of `angle` radians about a horizontal axis. The vertical component
    /// of `axis` is dropped; negative angles flip the axis.
    pub fn new(axis: Vector3<f64>, angle: f64) -> Self {
        let horizontal = Vector3::new(axis.x, axis.y, 0.0);
        let n = horizontal.norm();
        if n < 1e-12 || angle.abs() < 1e-15 {
            return Self::none();
        }
        let axis = horizontal / n;
        if angle < 0.0 {
            Self { axis: -axis, angle: -angle }
        } else {
            Self { axis, angle }
        }
    }

    pub fn axis(&self) -> Vector3<f64> {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn rotation(&self) -> UnitQuat {
        UnitQuat::from_axis_angle(&self.axis, self.angle)
    }
}

/// Tilt of `q_now` relative to `q_ref`.
///
/// The relative rotation `q_ref⁻¹ ⊗ q_now` is split into ZYX angles, the yaw is
/// discarded, and the remaining `Ry(pitch) * Rx(roll)` is returned in
/// axis-angle form with the axis projected onto the horizontal plane.
pub fn relative_tilt(q_now: &UnitQuat, q_ref: &UnitQuat) -> RelativeTilt {
    let rel = q_ref.inverse() * *q_now;
    let (axis, angle) = rel.tilt_only().axis_angle();
    RelativeTilt::new(axis, angle)
}

/// A planar rigid transform: translation in meters, yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: normalize_angle(yaw) }
    }

    pub const fn identity() -> Self {
        Self { x: 0.0, y: 0.0, yaw: 0.0 }
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn set_yaw(&mut self, yaw: f64) {
        self.yaw = normalize_angle(yaw);
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// `self ∘ other`: apply `other`, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.yaw.sin_cos();
        Pose2::new(self.x + c * other.x - s * other.y, self.y + s * other.x + c * other.y, self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.yaw.sin_cos();
        Pose2::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.yaw)
    }

    /// `self⁻¹ ∘ other`, the motion from `self` to `other` in `self`'s frame.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Applies the transform to the horizontal part of a 3D point; `z` is kept.
    pub fn transform_point3(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let h = self.transform_point(&Vector2::new(p.x, p.y));
        Vector3::new(h.x, h.y, p.z)
    }

    pub fn distance_to(&self, other: &Pose2) -> f64 {
        (self.translation() - other.translation()).norm()
    }

    pub fn approx_eq(&self, other: &Pose2, tol: f64) -> bool {
        (self.x - other.x).abs() <= tol
            && (self.y - other.y).abs() <= tol
            && normalize_angle(self.yaw - other.yaw).abs() <= tol
    }
}

/// SE(2) composition `a ∘ b`.
pub fn pose2_compose(a: &Pose2, b: &Pose2) -> Pose2 {
    a.compose(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const DEG: f64 = PI / 180.0;

    fn quat_strategy() -> impl Strategy<Value = UnitQuat> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| UnitQuat::from_wxyz(w, x, y, z))
    }

    #[test]
    fn normalize_angle_range() {
        assert_abs_diff_eq!(normalize_angle(PI), PI);
        assert_abs_diff_eq!(normalize_angle(-PI), PI);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(0.0), 0.0);
    }

    #[test]
    fn constructor_canonicalizes_sign() {
        let q = UnitQuat::from_wxyz(-2.0, 0.0, 0.0, 0.0);
        assert_eq!(q, UnitQuat::identity());
        let q = UnitQuat::from_wxyz(-0.5, 0.5, 0.5, 0.5);
        assert!(q.w() > 0.0);
        assert!(q.approx_eq(&q.negated(), 1e-12));
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let q0 = UnitQuat::from_rpy(0.1, -0.2, 0.3);
        let q1 = UnitQuat::from_rpy(-0.4, 0.5, 2.0);
        assert!(slerp(&q0, &q1, 0.0).approx_eq(&q0, 1e-12));
        assert!(slerp(&q0, &q1, 1.0).approx_eq(&q1, 1e-12));

        let quarter = UnitQuat::from_yaw(90.0 * DEG);
        let mid = slerp(&UnitQuat::identity(), &quarter, 0.5);
        assert!(mid.approx_eq(&UnitQuat::from_yaw(45.0 * DEG), 1e-12));
    }

    #[test]
    fn slerp_takes_short_arc() {
        let q0 = UnitQuat::from_yaw(170.0 * DEG);
        let q1 = UnitQuat::from_yaw(-170.0 * DEG);
        let mid = slerp(&q0, &q1, 0.5);
        assert_abs_diff_eq!(mid.yaw().abs(), PI, epsilon = 1e-9);
    }

    #[test]
    fn slerp_close_quaternions_uses_nlerp() {
        let q0 = UnitQuat::from_yaw(0.0);
        let q1 = UnitQuat::from_yaw(1e-4);
        let mid = slerp(&q0, &q1, 0.5);
        assert_abs_diff_eq!(mid.yaw(), 0.5e-4, epsilon = 1e-12);
    }

    #[test]
    fn rpy_examples() {
        let (r, p, y) = quat_to_rpy(&UnitQuat::identity());
        assert_eq!((r, p, y), (0.0, 0.0, 0.0));

        let (r, p, y) = quat_to_rpy(&UnitQuat::from_axis_angle(&Vector3::y(), 30.0 * DEG));
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 30.0 * DEG, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 0.0, epsilon = 1e-12);

        // Independent composition of elementary rotations.
        let composed = UnitQuat::from_axis_angle(&Vector3::z(), 10.0 * DEG)
            * UnitQuat::from_axis_angle(&Vector3::y(), 20.0 * DEG)
            * UnitQuat::from_axis_angle(&Vector3::x(), 5.0 * DEG);
        let (r, p, y) = quat_to_rpy(&composed);
        assert_abs_diff_eq!(r, 5.0 * DEG, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 20.0 * DEG, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 10.0 * DEG, epsilon = 1e-12);
    }

    #[test]
    fn rpy_gimbal_lock_reports_zero_roll() {
        let q = UnitQuat::from_rpy(0.3, PI / 2.0, 0.7);
        let (r, p, y) = q.to_rpy();
        assert_eq!(r, 0.0);
        assert_abs_diff_eq!(p, PI / 2.0, epsilon = 1e-6);
        // Only yaw - roll is observable at the singularity.
        assert_abs_diff_eq!(y, 0.4, epsilon = 1e-6);
        assert!(UnitQuat::from_rpy(r, p, y).approx_eq(&q, 1e-6));
    }

    #[test]
    fn rotation_matrix_matches_rotate() {
        let q = UnitQuat::from_rpy(0.3, -0.4, 1.2);
        let v = Vector3::new(1.0, -2.0, 0.5);
        assert_abs_diff_eq!(q.to_rotation_matrix() * v, q.rotate(&v), epsilon = 1e-12);
        // Positive pitch sends the body x axis downward.
        let down = UnitQuat::from_rpy(0.0, 10.0 * DEG, 0.0).rotate(&Vector3::x());
        assert!(down.z < 0.0);
    }

    #[test]
    fn relative_tilt_examples() {
        let q = UnitQuat::from_rpy(0.1, 0.2, 0.3);
        let t = relative_tilt(&q, &q);
        assert_eq!(t.angle(), 0.0);
        assert_eq!(t.axis(), Vector3::x());

        let t = relative_tilt(&UnitQuat::from_yaw(1.0), &UnitQuat::identity());
        assert_abs_diff_eq!(t.angle(), 0.0, epsilon = 1e-12);

        // Oracle: R_y(10°) has axis-angle (0,1,0), 10°.
        let pitch = UnitQuat::from_axis_angle(&Vector3::y(), 10.0 * DEG);
        let (axis, angle) = pitch.axis_angle();
        let t = relative_tilt(&pitch, &UnitQuat::identity());
        assert_abs_diff_eq!(t.angle(), angle, epsilon = 1e-12);
        assert_abs_diff_eq!(t.angle(), 10.0 * DEG, epsilon = 1e-12);
        assert_abs_diff_eq!(t.axis(), axis, epsilon = 1e-12);
        assert_abs_diff_eq!(t.axis(), Vector3::y(), epsilon = 1e-12);
    }

    #[test]
    fn relative_tilt_axis_is_horizontal_unit() {
        let t = relative_tilt(&UnitQuat::from_rpy(0.2, 0.3, 0.0), &UnitQuat::identity());
        assert_abs_diff_eq!(t.axis().z, 0.0);
        assert_abs_diff_eq!(t.axis().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pose2_examples() {
        let b = Pose2::new(1.0, 2.0, 0.3);
        assert!(pose2_compose(&Pose2::identity(), &b).approx_eq(&b, 1e-12));

        let c = pose2_compose(&Pose2::new(1.0, 0.0, 90.0 * DEG), &Pose2::new(1.0, 0.0, 0.0));
        assert!(c.approx_eq(&Pose2::new(1.0, 1.0, 90.0 * DEG), 1e-12));

        let a = Pose2::new(-3.0, 4.5, 2.9);
        assert!(a.compose(&a.inverse()).approx_eq(&Pose2::identity(), 1e-9));
    }

    #[test]
    fn pose2_yaw_wraps() {
        let p = Pose2::new(0.0, 0.0, 3.0).compose(&Pose2::new(0.0, 0.0, 3.0));
        assert!(p.yaw() > -PI && p.yaw() <= PI);
        assert_abs_diff_eq!(p.yaw(), 6.0 - 2.0 * PI, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn slerp_constant_angular_speed(q0 in quat_strategy(), q1 in quat_strategy(), t in 0.0f64..=1.0) {
            let total = q0.angle_to(&q1);
            let partial = q0.angle_to(&slerp(&q0, &q1, t));
            prop_assert!((partial - t * total).abs() < 1e-7, "{partial} vs {}", t * total);
        }

        #[test]
        fn slerp_stays_unit(q0 in quat_strategy(), q1 in quat_strategy(), t in 0.0f64..=1.0) {
            let q = slerp(&q0, &q1, t);
            let n: f64 = q.to_array().iter().map(|c| c * c).sum();
            prop_assert!((n.sqrt() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn rpy_round_trip(roll in -3.1f64..3.1, pitch in -1.5f64..1.5, yaw in -3.1f64..3.1) {
            let (r, p, y) = UnitQuat::from_rpy(roll, pitch, yaw).to_rpy();
            prop_assert!((r - roll).abs() < 1e-9);
            prop_assert!((p - pitch).abs() < 1e-9);
            prop_assert!((y - yaw).abs() < 1e-9);
        }

        #[test]
        fn relative_tilt_invariant_to_common_yaw(
            r1 in -0.5f64..0.5, p1 in -0.5f64..0.5, y1 in -3.0f64..3.0,
            r2 in -0.5f64..0.5, p2 in -0.5f64..0.5, y2 in -3.0f64..3.0,
            common in -3.0f64..3.0,
        ) {
            let a = UnitQuat::from_rpy(r1, p1, y1);
            let b = UnitQuat::from_rpy(r2, p2, y2);
            let yaw = UnitQuat::from_yaw(common);
            let t0 = relative_tilt(&a, &b);
            let t1 = relative_tilt(&(yaw * a), &(yaw * b));
            prop_assert!((t0.angle() - t1.angle()).abs() < 1e-7);
            if t0.angle() > 1e-6 {
                // Body-frame axis: a world-frame yaw leaves it unchanged.
                prop_assert!((t0.axis() - t1.axis()).norm() < 1e-6);
            }
        }

        #[test]
        fn pose2_compose_associative(
            a in (-50.0f64..50.0, -50.0f64..50.0, -3.1f64..3.1),
            b in (-50.0f64..50.0, -50.0f64..50.0, -3.1f64..3.1),
            c in (-50.0f64..50.0, -50.0f64..50.0, -3.1f64..3.1),
        ) {
            let (a, b, c) = (Pose2::new(a.0, a.1, a.2), Pose2::new(b.0, b.1, b.2), Pose2::new(c.0, c.1, c.2));
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(left.approx_eq(&right, 1e-9));
        }

        #[test]
        fn pose2_inverse_is_identity(x in -100.0f64..100.0, y in -100.0f64..100.0, yaw in -3.2f64..3.2) {
            let a = Pose2::new(x, y, yaw);
            prop_assert!(a.compose(&a.inverse()).approx_eq(&Pose2::identity(), 1e-9));
            prop_assert!(a.inverse().compose(&a).approx_eq(&Pose2::identity(), 1e-9));
        }
    }
}
