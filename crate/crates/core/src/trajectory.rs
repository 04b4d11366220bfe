//! Waypoints, trajectories, smooth interpolation and gripper-preserving
//! length normalization.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::quat::{slerp, Quat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GripperState {
    Open,
    Closed,
    Holding,
}

impl GripperState {
    /// Scalar encoding used in trajectory feature vectors.
    pub fn ordinal(self) -> f64 {
        match self {
            GripperState::Open => 0.0,
            GripperState::Closed => 1.0,
            GripperState::Holding => 0.5,
        }
    }

    pub fn toggled(self) -> GripperState {
        match self {
            GripperState::Open => GripperState::Closed,
            GripperState::Closed | GripperState::Holding => GripperState::Open,
        }
    }
}

impl fmt::Display for GripperState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GripperState::Open => "open",
            GripperState::Closed => "closed",
            GripperState::Holding => "holding",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Crowd,
    Expert,
    Synthetic,
}

#[derive(Deserialize)]
struct RawWaypoint {
    g: GripperState,
    t: [f64; 3],
    r: [f64; 4],
}

/// One trajectory sample: gripper state, translation (meters) and a unit
/// quaternion `(x, y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWaypoint")]
pub struct Waypoint {
    #[serde(rename = "g")]
    pub gripper: GripperState,
    #[serde(rename = "t")]
    pub translation: Vec3,
    #[serde(rename = "r")]
    pub rotation: Quat,
}

impl TryFrom<RawWaypoint> for Waypoint {
    type Error = Error;

    fn try_from(raw: RawWaypoint) -> Result<Self> {
        Waypoint::new(raw.g, Vec3::from(raw.t), Quat::from(raw.r)).map_err(|e| match e {
            Error::InvalidQuaternion { norm } => Error::invalid("r", format!("quaternion norm {norm} is not 1")),
            other => other,
        })
    }
}

impl Waypoint {
    /// Builds a waypoint, normalizing `rotation` after checking it is unit
    /// within tolerance.
    pub fn new(gripper: GripperState, translation: Vec3, rotation: Quat) -> Result<Self> {
        if !translation.is_finite() {
            return Err(Error::invalid("t", "translation must be finite"));
        }
        Ok(Waypoint {
            gripper,
            translation,
            rotation: rotation.unit()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.translation.is_finite() {
            return Err(Error::invalid("t", "translation must be finite"));
        }
        self.rotation.check_unit()
    }
}

/// Ordered list of waypoints with an opaque id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    #[serde(default)]
    pub source: Source,
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, source: Source, waypoints: Vec<Waypoint>) -> Result<Self> {
        let traj = Trajectory {
            id: id.into(),
            source,
            waypoints,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        for (i, wp) in self.waypoints.iter().enumerate() {
            wp.validate().map_err(|e| match e {
                Error::InvalidQuaternion { norm } => {
                    Error::invalid(format!("waypoints[{i}].r"), format!("quaternion norm {norm} is not 1"))
                }
                Error::InvalidValue { field, reason } => Error::invalid(format!("waypoints[{i}].{field}"), reason),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Same trajectory with every waypoint replaced by `f(waypoint)`.
    pub fn map_waypoints(&self, f: impl FnMut(&Waypoint) -> Waypoint) -> Trajectory {
        Trajectory {
            id: self.id.clone(),
            source: self.source,
            waypoints: self.waypoints.iter().map(f).collect(),
        }
    }
}

/// Inserts `samples_per_segment` intermediate waypoints between every pair of
/// consecutive waypoints. Translation is linear, rotation is slerped, and the
/// gripper state is taken from the segment's starting waypoint.
pub fn interpolate(traj: &Trajectory, samples_per_segment: usize) -> Result<Trajectory> {
    if traj.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: traj.len(),
        });
    }
    if samples_per_segment == 0 {
        return Err(Error::invalid("samples_per_segment", "must be at least 1"));
    }
    let steps = samples_per_segment + 1;
    let mut out = Vec::with_capacity(traj.len() + (traj.len() - 1) * samples_per_segment);
    for pair in traj.waypoints.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        out.push(*a);
        for k in 1..steps {
            let t = k as f64 / steps as f64;
            out.push(Waypoint {
                gripper: a.gripper,
                translation: a.translation.lerp(b.translation, t),
                rotation: slerp(a.rotation, b.rotation, t)?,
            });
        }
    }
    out.push(*traj.waypoints.last().expect("len >= 2"));
    Ok(Trajectory {
        id: traj.id.clone(),
        source: traj.source,
        waypoints: out,
    })
}

/// Maximal runs of consecutive waypoints sharing a gripper state, as
/// `(state, start, len)`.
pub fn gripper_runs(waypoints: &[Waypoint]) -> Vec<(GripperState, usize, usize)> {
    let mut runs: Vec<(GripperState, usize, usize)> = Vec::new();
    for (i, wp) in waypoints.iter().enumerate() {
        match runs.last_mut() {
            Some((g, _, len)) if *g == wp.gripper => *len += 1,
            _ => runs.push((wp.gripper, i, 1)),
        }
    }
    runs
}

/// Splits `target` waypoints across runs proportionally to `lengths`, using
/// largest-remainder rounding with at least one waypoint per run.
///
/// Arithmetic is exact integer arithmetic, so a run already holding its
/// proportional share keeps exactly that count.
pub fn apportion(lengths: &[usize], target: usize) -> Result<Vec<usize>> {
    let runs = lengths.len();
    if target < runs || runs == 0 {
        return Err(Error::CannotPreserveGripperSequence { runs, target });
    }
    let total = lengths.iter().sum::<usize>() as i128;
    // quota_r = target * len_r / total; deficits are (quota - count) * total
    let quota: Vec<i128> = lengths.iter().map(|&len| (target * len) as i128).collect();
    let mut counts: Vec<usize> = quota.iter().map(|&q| ((q / total) as usize).max(1)).collect();
    let deficit = |counts: &[usize], r: usize| quota[r] - counts[r] as i128 * total;
    let mut assigned: usize = counts.iter().sum();
    if assigned < target {
        let mut order: Vec<usize> = (0..runs).collect();
        // largest remainder first, earlier run on ties
        order.sort_by(|&a, &b| deficit(&counts, b).cmp(&deficit(&counts, a)).then(a.cmp(&b)));
        for &r in order.iter().cycle() {
            if assigned == target {
                break;
            }
            counts[r] += 1;
            assigned += 1;
        }
    }
    while assigned > target {
        // take from the run furthest above its quota that can spare one,
        // later run on ties
        let r = (0..runs)
            .filter(|&r| counts[r] > 1)
            .min_by(|&a, &b| deficit(&counts, a).cmp(&deficit(&counts, b)).then(b.cmp(&a)))
            .expect("target >= runs guarantees a donor");
        counts[r] -= 1;
        assigned -= 1;
    }
    Ok(counts)
}

/// Resamples a single gripper run to `count` waypoints at uniform arc-length
/// parameter (translation distance). Runs with zero arc length fall back to a
/// uniform index parameter.
fn resample_run(run: &[Waypoint], count: usize) -> Result<Vec<Waypoint>> {
    if count == run.len() {
        return Ok(run.to_vec());
    }
    let gripper = run[0].gripper;
    if run.len() == 1 {
        return Ok(vec![run[0]; count]);
    }
    let mut cumulative = Vec::with_capacity(run.len());
    cumulative.push(0.0);
    for pair in run.windows(2) {
        let d = pair[1].translation.sub(pair[0].translation).norm();
        cumulative.push(cumulative.last().copied().unwrap_or(0.0) + d);
    }
    let total = *cumulative.last().expect("non-empty");
    let use_index = total <= 0.0;
    let param = |i: usize| -> f64 {
        if use_index {
            i as f64
        } else {
            cumulative[i]
        }
    };
    let end = param(run.len() - 1);

    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = if count == 1 {
            0.0
        } else {
            end * k as f64 / (count - 1) as f64
        };
        while seg + 1 < run.len() - 1 && param(seg + 1) <= s {
            seg += 1;
        }
        let (a, b) = (&run[seg], &run[seg + 1]);
        let span = param(seg + 1) - param(seg);
        let t = if span > 0.0 {
            ((s - param(seg)) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(Waypoint {
            gripper,
            translation: a.translation.lerp(b.translation, t),
            rotation: slerp(a.rotation, b.rotation, t)?,
        });
    }
    Ok(out)
}

/// Resamples `traj` to exactly `target_len` waypoints while keeping the
/// ordered sequence of gripper-state runs.
pub fn normalize_length(traj: &Trajectory, target_len: usize) -> Result<Trajectory> {
    if traj.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let runs = gripper_runs(&traj.waypoints);
    let lengths: Vec<usize> = runs.iter().map(|r| r.2).collect();
    let counts = apportion(&lengths, target_len)?;
    let mut waypoints = Vec::with_capacity(target_len);
    for (&(_, start, len), &count) in runs.iter().zip(&counts) {
        waypoints.extend(resample_run(&traj.waypoints[start..start + len], count)?);
    }
    debug_assert_eq!(waypoints.len(), target_len);
    Ok(Trajectory {
        id: traj.id.clone(),
        source: traj.source,
        waypoints,
    })
}
