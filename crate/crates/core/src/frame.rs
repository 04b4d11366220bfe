//! Gravity-aligned, principal-axis part frames.
//!
//! A part frame has its origin at the part centroid, `z` pointing against
//! gravity and `x` along the dominant horizontal axis of the part's points.
//! Trajectories expressed in this frame carry over unchanged between parts
//! that are manipulated the same way.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::quat::Quat;
use crate::trajectory::{Trajectory, Waypoint};

/// Relative eigenvalue gap below which the horizontal principal axis is
/// considered ambiguous.
pub const EIGEN_TIE_TOLERANCE: f64 = 1e-9;

/// Third central moments smaller than this do not decide the axis sign.
pub const MOMENT_TOLERANCE: f64 = 1e-12;

/// World gravity direction assumed when none is given.
pub const DEFAULT_GRAVITY: Vec3 = Vec3::new(0.0, 0.0, -1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct ColoredPoint {
    pub position: Vec3,
    pub rgb: [f64; 3],
}

impl From<[f64; 6]> for ColoredPoint {
    fn from(v: [f64; 6]) -> Self {
        ColoredPoint {
            position: Vec3::new(v[0], v[1], v[2]),
            rgb: [v[3], v[4], v[5]],
        }
    }
}

impl From<ColoredPoint> for [f64; 6] {
    fn from(p: ColoredPoint) -> Self {
        [p.position.x, p.position.y, p.position.z, p.rgb[0], p.rgb[1], p.rgb[2]]
    }
}

/// Segmented, colored points of one object part (world frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudPart {
    pub part_id: String,
    pub points: Vec<ColoredPoint>,
}

impl PointCloudPart {
    pub fn new(part_id: impl Into<String>, points: Vec<ColoredPoint>) -> Result<Self> {
        let part = PointCloudPart {
            part_id: part_id.into(),
            points,
        };
        part.validate()?;
        Ok(part)
    }

    pub fn from_positions(part_id: impl Into<String>, positions: &[Vec3]) -> Result<Self> {
        let points = positions
            .iter()
            .map(|&position| ColoredPoint {
                position,
                rgb: [128.0, 128.0, 128.0],
            })
            .collect();
        PointCloudPart::new(part_id, points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 3 {
            return Err(Error::TooFewPoints(self.points.len()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !p.position.is_finite() {
                return Err(Error::invalid(format!("points[{i}]"), "position must be finite"));
            }
            if p.rgb.iter().any(|c| !(0.0..=255.0).contains(c)) {
                return Err(Error::invalid(
                    format!("points[{i}]"),
                    "color channels must lie in [0, 255]",
                ));
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self.points.iter().fold(Vec3::ZERO, |acc, p| acc.add(p.position));
        sum.scale(1.0 / self.points.len() as f64)
    }
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    origin: [f64; 3],
    basis: [[f64; 3]; 3],
}

/// Origin plus orthonormal basis; the basis columns are the frame's x, y, z
/// axes in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame", into = "RawFrame")]
pub struct PartFrame {
    pub origin: Vec3,
    pub basis: Mat3,
}

impl TryFrom<RawFrame> for PartFrame {
    type Error = Error;

    fn try_from(raw: RawFrame) -> Result<Self> {
        PartFrame::new(Vec3::from(raw.origin), Mat3::from_rows(raw.basis))
    }
}

impl From<PartFrame> for RawFrame {
    fn from(f: PartFrame) -> Self {
        RawFrame {
            origin: f.origin.to_array(),
            basis: f.basis.rows(),
        }
    }
}

impl PartFrame {
    pub const IDENTITY: PartFrame = PartFrame {
        origin: Vec3::ZERO,
        basis: Mat3::IDENTITY,
    };

    pub fn new(origin: Vec3, basis: Mat3) -> Result<Self> {
        if !origin.is_finite() {
            return Err(Error::invalid("origin", "must be finite"));
        }
        if basis.orthonormality_error() > 1e-6 || basis.determinant() < 0.0 {
            return Err(Error::invalid("basis", "must be a proper rotation"));
        }
        Ok(PartFrame { origin, basis })
    }

    pub fn x_axis(&self) -> Vec3 {
        self.basis.column(0)
    }

    pub fn y_axis(&self) -> Vec3 {
        self.basis.column(1)
    }

    pub fn z_axis(&self) -> Vec3 {
        self.basis.column(2)
    }

    pub fn rotation(&self) -> Quat {
        Quat::from_matrix(&self.basis)
    }

    pub fn point_to_frame(&self, p: Vec3) -> Vec3 {
        self.basis.transpose().mul_vec(p.sub(self.origin))
    }

    pub fn point_from_frame(&self, p: Vec3) -> Vec3 {
        self.basis.mul_vec(p).add(self.origin)
    }
}

/// Result of estimating a part frame; `ambiguous` is set when the horizontal
/// principal axis could not be resolved and the world-x tie-break was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEstimate {
    pub frame: PartFrame,
    pub ambiguous: bool,
}

/// Orthonormal basis `(u, v)` of the plane perpendicular to `up`, with
/// `u` as close to world +x as possible.
fn plane_basis(up: Vec3) -> (Vec3, Vec3) {
    let seed = if up.cross(Vec3::X).norm() > 1e-6 {
        Vec3::X
    } else {
        Vec3::Y
    };
    let u = seed.sub(up.scale(seed.dot(up))).normalized();
    let v = up.cross(u);
    (u, v)
}

/// Principal eigenvector (unit, arbitrary sign) of the symmetric 2×2 matrix
/// `[[a, b], [b, c]]`, with the two eigenvalues in descending order.
pub(crate) fn principal_2x2(a: f64, b: f64, c: f64) -> ((f64, f64), f64, f64) {
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mean + radius, mean - radius);
    // eigenvector of l1: (l1 - c, b) or (b, l1 - a), whichever is better conditioned
    let (e1, e2) = if a >= c { (l1 - c, b) } else { (b, l1 - a) };
    let n = (e1 * e1 + e2 * e2).sqrt();
    if n == 0.0 {
        ((1.0, 0.0), l1, l2)
    } else {
        ((e1 / n, e2 / n), l1, l2)
    }
}

/// Estimates the part frame of `part` for the given world `gravity`
/// direction.
pub fn estimate_part_frame(part: &PointCloudPart, gravity: Vec3) -> Result<FrameEstimate> {
    part.validate()?;
    let g_norm = gravity.norm();
    if !g_norm.is_finite() || g_norm == 0.0 {
        return Err(Error::invalid("gravity", "must be a non-zero finite vector"));
    }
    let z = gravity.scale(-1.0 / g_norm);
    let (u, v) = plane_basis(z);
    let origin = part.centroid();

    let n = part.points.len() as f64;
    let planar: Vec<(f64, f64)> = part
        .points
        .iter()
        .map(|p| {
            let d = p.position.sub(origin);
            (d.dot(u), d.dot(v))
        })
        .collect();
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for &(a, b) in &planar {
        suu += a * a;
        suv += a * b;
        svv += b * b;
    }
    let ((eu, ev), l1, l2) = principal_2x2(suu / n, suv / n, svv / n);

    let ambiguous = l1 <= 0.0 || (l1 - l2) <= EIGEN_TIE_TOLERANCE * l1.abs();
    let mut x = if ambiguous {
        warn!(
            "part {}: horizontal principal axis is ambiguous (eigenvalues {l1:.3e}, {l2:.3e}); aligning x with world +x",
            part.part_id
        );
        u
    } else {
        u.scale(eu).add(v.scale(ev)).normalized()
    };

    let moment: f64 = planar
        .iter()
        .map(|&(a, b)| {
            let s = a * x.dot(u) + b * x.dot(v);
            s * s * s
        })
        .sum::<f64>()
        / n;
    if moment.abs() >= MOMENT_TOLERANCE {
        if moment < 0.0 {
            x = x.scale(-1.0);
        }
    } else if x.dot(Vec3::X) < 0.0 || (x.dot(Vec3::X) == 0.0 && x.dot(Vec3::Y) < 0.0) {
        x = x.scale(-1.0);
    }

    let y = z.cross(x);
    Ok(FrameEstimate {
        frame: PartFrame {
            origin,
            basis: Mat3::from_columns(x, y, z),
        },
        ambiguous,
    })
}

/// Part frame of `part`: origin at the centroid, z against `gravity`, x along
/// the sign-canonicalized first principal component of the horizontally
/// projected points.
pub fn compute_part_frame(part: &PointCloudPart, gravity: Vec3) -> Result<PartFrame> {
    estimate_part_frame(part, gravity).map(|e| e.frame)
}

/// Expresses a world-frame trajectory in `frame`.
pub fn to_part_frame(traj: &Trajectory, frame: &PartFrame) -> Trajectory {
    let inv = frame.rotation().conjugate();
    traj.map_waypoints(|w| Waypoint {
        gripper: w.gripper,
        translation: frame.point_to_frame(w.translation),
        rotation: normalize(inv.mul(w.rotation)),
    })
}

/// Inverse of [`to_part_frame`].
pub fn from_part_frame(traj: &Trajectory, frame: &PartFrame) -> Trajectory {
    let rot = frame.rotation();
    traj.map_waypoints(|w| Waypoint {
        gripper: w.gripper,
        translation: frame.point_from_frame(w.translation),
        rotation: normalize(rot.mul(w.rotation)),
    })
}

fn normalize(q: Quat) -> Quat {
    q.scale(1.0 / q.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{GripperState, Source};
    use approx::assert_abs_diff_eq;

    fn line_part() -> PointCloudPart {
        let pts: Vec<Vec3> = (0..11).map(|i| Vec3::new(0.01 * i as f64, 0.0, 0.0)).collect();
        PointCloudPart::from_positions("line", &pts).unwrap()
    }

    fn sample_traj() -> Trajectory {
        Trajectory::new(
            "s",
            Source::Synthetic,
            vec![
                Waypoint::new(
                    GripperState::Open,
                    Vec3::new(1.0, 0.0, 0.0),
                    Quat::from_axis_angle(Vec3::new(0.3, 1.0, 0.2), 0.8),
                )
                .unwrap(),
                Waypoint::new(GripperState::Closed, Vec3::new(0.1, -0.4, 0.9), Quat::IDENTITY).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn line_along_world_x() {
        let f = compute_part_frame(&line_part(), DEFAULT_GRAVITY).unwrap();
        assert_abs_diff_eq!(f.x_axis().x.abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.origin.x, 0.05, epsilon = 1e-12);
        assert_eq!(f.z_axis(), Vec3::Z);
        assert_abs_diff_eq!(f.basis.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn disk_uses_world_x_tie_break() {
        let pts: Vec<Vec3> = (0..8)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 8.0;
                Vec3::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        let part = PointCloudPart::from_positions("disk", &pts).unwrap();
        let est = estimate_part_frame(&part, DEFAULT_GRAVITY).unwrap();
        assert!(est.ambiguous);
        assert_abs_diff_eq!(est.frame.x_axis().x, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_frame_leaves_trajectory_unchanged() {
        let t = sample_traj();
        let out = to_part_frame(&t, &PartFrame::IDENTITY);
        for (a, b) in t.waypoints.iter().zip(&out.waypoints) {
            assert_eq!(a.translation, b.translation);
            assert_abs_diff_eq!(a.rotation.dot(b.rotation), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn quarter_turn_about_gravity() {
        // frame x = world y, so world x maps to part -y
        let basis = Mat3::from_columns(Vec3::Y, Vec3::X.scale(-1.0), Vec3::Z);
        let frame = PartFrame::new(Vec3::ZERO, basis).unwrap();
        let out = to_part_frame(&sample_traj(), &frame);
        let p = out.waypoints[0].translation;
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn round_trip() {
        let basis = Quat::from_axis_angle(Vec3::new(0.1, 0.2, 1.0), 1.1).to_matrix();
        let frame = PartFrame::new(Vec3::new(0.4, -2.0, 0.3), basis).unwrap();
        let t = sample_traj();
        let back = from_part_frame(&to_part_frame(&t, &frame), &frame);
        for (a, b) in t.waypoints.iter().zip(&back.waypoints) {
            assert_abs_diff_eq!(a.translation.sub(b.translation).norm(), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(a.rotation.dot(b.rotation).abs(), 1.0, epsilon = 1e-9);
            assert_eq!(a.gripper, b.gripper);
        }
    }

    #[test]
    fn rejects_improper_basis() {
        let mirror = Mat3::from_columns(Vec3::X, Vec3::Y, Vec3::Z.scale(-1.0));
        assert!(PartFrame::new(Vec3::ZERO, mirror).is_err());
    }

    #[test]
    fn frame_json_shape() {
        let json = serde_json::to_value(PartFrame::IDENTITY).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"origin": [0.0, 0.0, 0.0], "basis": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]})
        );
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            PointCloudPart::from_positions("p", &[Vec3::ZERO, Vec3::X]),
            Err(Error::TooFewPoints(2))
        ));
    }
}
