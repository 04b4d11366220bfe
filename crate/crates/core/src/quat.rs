//! Unit quaternions in `(x, y, z, w)` order and the small amount of rotation
//! algebra the engine needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Maximum deviation of `|q|` from 1 accepted as "unit" input.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Below this angular separation slerp falls back to normalized lerp.
const SLERP_LINEAR_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl From<[f64; 4]> for Quat {
    fn from(v: [f64; 4]) -> Self {
        Quat::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        q.to_array()
    }
}

#[allow(clippy::should_implement_trait)]
impl Quat {
    pub const IDENTITY: Quat = Quat {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Quat { x, y, z, w }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let axis = axis.normalized();
        let (s, c) = (angle / 2.0).sin_cos();
        Quat::new(axis.x * s, axis.y * s, axis.z * s, c)
    }

    pub fn dot(self, other: Quat) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Quat {
        Quat::new(self.x * s, self.y * s, self.z * s, self.w * s)
    }

    pub fn add(self, o: Quat) -> Quat {
        Quat::new(self.x + o.x, self.y + o.y, self.z + o.z, self.w + o.w)
    }

    pub fn sub(self, o: Quat) -> Quat {
        Quat::new(self.x - o.x, self.y - o.y, self.z - o.z, self.w - o.w)
    }

    pub fn neg(self) -> Quat {
        self.scale(-1.0)
    }

    pub fn conjugate(self) -> Quat {
        Quat::new(-self.x, -self.y, -self.z, self.w)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.w.is_finite()
    }

    /// Normalizes `self`, rejecting inputs whose norm is off by more than
    /// [`UNIT_TOLERANCE`]. Quaternions already unit to rounding precision
    /// are returned unchanged, so stored values reload bit for bit.
    pub fn unit(self) -> Result<Quat> {
        let n = self.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidQuaternion { norm: n });
        }
        if (n - 1.0).abs() <= 8.0 * f64::EPSILON {
            return Ok(self);
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn check_unit(self) -> Result<()> {
        self.unit().map(|_| ())
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(self, rhs: Quat) -> Quat {
        let (a, b) = (self, rhs);
        Quat::new(
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        )
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        self.to_matrix().mul_vec(v)
    }

    pub fn to_matrix(self) -> Mat3 {
        let Quat { x, y, z, w } = self;
        Mat3::from_rows([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - z * w),
                2.0 * (x * z + y * w),
            ],
            [
                2.0 * (x * y + z * w),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - x * w),
            ],
            [
                2.0 * (x * z - y * w),
                2.0 * (y * z + x * w),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_matrix(m: &Mat3) -> Quat {
        let r = |i: usize, j: usize| m.get(i, j);
        let trace = r(0, 0) + r(1, 1) + r(2, 2);
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(
                (r(2, 1) - r(1, 2)) / s,
                (r(0, 2) - r(2, 0)) / s,
                (r(1, 0) - r(0, 1)) / s,
                0.25 * s,
            )
        } else if r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2) {
            let s = (1.0 + r(0, 0) - r(1, 1) - r(2, 2)).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (r(0, 1) + r(1, 0)) / s,
                (r(0, 2) + r(2, 0)) / s,
                (r(2, 1) - r(1, 2)) / s,
            )
        } else if r(1, 1) > r(2, 2) {
            let s = (1.0 + r(1, 1) - r(0, 0) - r(2, 2)).sqrt() * 2.0;
            Quat::new(
                (r(0, 1) + r(1, 0)) / s,
                0.25 * s,
                (r(1, 2) + r(2, 1)) / s,
                (r(0, 2) - r(2, 0)) / s,
            )
        } else {
            let s = (1.0 + r(2, 2) - r(0, 0) - r(1, 1)).sqrt() * 2.0;
            Quat::new(
                (r(0, 2) + r(2, 0)) / s,
                (r(1, 2) + r(2, 1)) / s,
                0.25 * s,
                (r(1, 0) - r(0, 1)) / s,
            )
        };
        q.scale(1.0 / q.norm())
    }

    /// Geodesic rotation angle between two unit quaternions, in `[0, π]`.
    ///
    /// Equals `2·acos(|⟨a, b⟩|)` but is evaluated through `atan2` so that
    /// nearly identical rotations do not lose precision.
    pub fn angle_to(self, other: Quat) -> f64 {
        let b = if self.dot(other) < 0.0 { other.neg() } else { other };
        let diff = self.sub(b).norm();
        let sum = self.add(b).norm();
        4.0 * diff.atan2(sum)
    }
}

/// Spherical linear interpolation along the shorter arc between unit
/// quaternions `q0` and `q1`.
pub fn slerp(q0: Quat, q1: Quat, t: f64) -> Result<Quat> {
    let q0 = q0.unit()?;
    let mut q1 = q1.unit()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid("t", format!("{t} is outside [0, 1]")));
    }
    let mut dot = q0.dot(q1);
    if dot < 0.0 {
        q1 = q1.neg();
        dot = -dot;
    }
    if dot > 1.0 - SLERP_LINEAR_THRESHOLD {
        let q = q0.scale(1.0 - t).add(q1.scale(t));
        return Ok(q.scale(1.0 / q.norm()));
    }
    let theta = dot.min(1.0).acos();
    let sin_theta = theta.sin();
    let a = ((1.0 - t) * theta).sin() / sin_theta;
    let b = (t * theta).sin() / sin_theta;
    let q = q0.scale(a).add(q1.scale(b));
    // Renormalize away rounding drift.
    Ok(q.scale(1.0 / q.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn slerp_identity_case() {
        let q = Quat::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.7);
        let r = slerp(q, q, 0.5).unwrap();
        assert_abs_diff_eq!(r.dot(q), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn slerp_quarter_turn_midpoint() {
        let q1 = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), PI / 2.0);
        let mid = slerp(Quat::IDENTITY, q1, 0.5).unwrap();
        let expected = [0.0, 0.0, (PI / 8.0).sin(), (PI / 8.0).cos()];
        for (a, b) in mid.to_array().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn slerp_takes_short_arc() {
        let q1 = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), PI / 2.0).neg();
        let mid = slerp(Quat::IDENTITY, q1, 0.5).unwrap();
        assert_abs_diff_eq!(mid.angle_to(Quat::IDENTITY), PI / 4.0, epsilon = 1e-9);
    }

    #[test]
    fn slerp_rejects_non_unit() {
        let bad = Quat::new(0.0, 0.0, 0.0, 1.1);
        assert!(matches!(
            slerp(bad, Quat::IDENTITY, 0.5),
            Err(Error::InvalidQuaternion { .. })
        ));
    }

    #[test]
    fn matrix_round_trip() {
        let q = Quat::from_axis_angle(Vec3::new(-0.3, 0.9, 0.1), 2.9);
        let back = Quat::from_matrix(&q.to_matrix());
        assert_abs_diff_eq!(back.dot(q).abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn angle_of_identical_rotations_is_exactly_zero() {
        let q = Quat::from_axis_angle(Vec3::new(0.2, 0.1, 0.4), 1.3);
        assert_eq!(q.angle_to(q), 0.0);
        assert_eq!(q.angle_to(q.neg()), 0.0);
    }

    #[test]
    fn hamilton_product_composes_rotations() {
        let a = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 0.4);
        let b = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 0.5);
        assert_abs_diff_eq!(a.mul(b).angle_to(Quat::IDENTITY), 0.9, epsilon = 1e-12);
        let v = Vec3::new(0.3, -1.0, 2.0);
        let composed = a.mul(b).rotate(v);
        let sequential = a.rotate(b.rotate(v));
        assert_abs_diff_eq!(composed.sub(sequential).norm(), 0.0, epsilon = 1e-12);
    }
}
