//! DTW-MT: dynamic time warping distance between manipulation trajectories.
//!
//! The local cost of matching two waypoints combines translation distance,
//! rotation angle and gripper disagreement, and is down-weighted for
//! waypoints far from the object part:
//!
//! ```text
//! c(a, b) = w(a)·w(b)·(d_T/α_T + d_R/α_R)·(1 + β·d_G),   w(τ) = exp(−γ·|t|)
//! ```
//!
//! The cumulative cost of the optimal monotone warping path is normalized by
//! the number of matched pairs on that path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Trajectory, Waypoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtwParams {
    /// Translation scale, meters.
    pub alpha_t: f64,
    /// Rotation scale, radians.
    pub alpha_r: f64,
    /// Weight of the gripper-disagreement term.
    pub beta: f64,
    /// Decay of the proximity weight, 1/meters.
    pub gamma: f64,
    /// Penalize *matching* gripper states instead of mismatching ones.
    pub literal_gripper_indicator: bool,
}

impl Default for DtwParams {
    fn default() -> Self {
        DtwParams {
            alpha_t: 0.005,
            alpha_r: 0.5,
            beta: 1.0,
            gamma: 4.0,
            literal_gripper_indicator: false,
        }
    }
}

impl DtwParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must be finite and > 0")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must be finite and >= 0")))
            }
        };
        positive("alpha_t", self.alpha_t)?;
        positive("alpha_r", self.alpha_r)?;
        non_negative("beta", self.beta)?;
        non_negative("gamma", self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub distance: f64,
    /// Cumulative cost of the optimal warping path.
    pub cumulative: f64,
    /// Matched `(i, j)` pairs, 1-based, from `(1, 1)` to `(m_A, m_B)`.
    pub path: Vec<(usize, usize)>,
    pub path_len: usize,
}

fn proximity_weight(w: &Waypoint, gamma: f64) -> f64 {
    (-gamma * w.translation.norm()).exp()
}

/// Local matching cost between two part-frame waypoints.
pub fn waypoint_cost(a: &Waypoint, b: &Waypoint, params: &DtwParams) -> Result<f64> {
    a.rotation.check_unit()?;
    b.rotation.check_unit()?;
    Ok(cost_unchecked(a, b, params))
}

#[inline]
fn cost_unchecked(a: &Waypoint, b: &Waypoint, params: &DtwParams) -> f64 {
    let d_t = a.translation.sub(b.translation).norm();
    let d_r = a.rotation.angle_to(b.rotation);
    let differ = a.gripper != b.gripper;
    let indicator = if differ != params.literal_gripper_indicator {
        1.0
    } else {
        0.0
    };
    let weight = proximity_weight(a, params.gamma) * proximity_weight(b, params.gamma);
    weight * (d_t / params.alpha_t + d_r / params.alpha_r) * (1.0 + params.beta * indicator)
}

#[derive(Clone, Copy)]
enum Step {
    Diagonal,
    Up,
    Left,
}

/// DTW-MT distance between `a` and `b`.
///
/// Ties in the backtracking prefer the diagonal; between a vertical and a
/// horizontal predecessor of equal cost the one with the shorter path wins,
/// so the normalizer, and hence the distance, is symmetric in its arguments.
pub fn dtw_mt(a: &Trajectory, b: &Trajectory, params: &DtwParams) -> Result<DtwResult> {
    let (ma, mb) = (a.len(), b.len());
    if ma == 0 || mb == 0 {
        return Err(Error::TooShort {
            needed: 1,
            got: ma.min(mb),
        });
    }
    for w in a.waypoints.iter().chain(&b.waypoints) {
        w.rotation.check_unit()?;
    }

    // cumulative cost and path length, row-major over (i, j), 0-based
    let mut cost = vec![0.0_f64; ma * mb];
    let mut len = vec![0_usize; ma * mb];
    let idx = |i: usize, j: usize| i * mb + j;

    for i in 0..ma {
        for j in 0..mb {
            let c = cost_unchecked(&a.waypoints[i], &b.waypoints[j], params);
            let (prev_cost, prev_len) = match (i, j) {
                (0, 0) => (0.0, 0),
                (0, _) => (cost[idx(0, j - 1)], len[idx(0, j - 1)]),
                (_, 0) => (cost[idx(i - 1, 0)], len[idx(i - 1, 0)]),
                _ => {
                    let step = choose_step(&cost, &len, idx(i - 1, j - 1), idx(i - 1, j), idx(i, j - 1));
                    let k = match step {
                        Step::Diagonal => idx(i - 1, j - 1),
                        Step::Up => idx(i - 1, j),
                        Step::Left => idx(i, j - 1),
                    };
                    (cost[k], len[k])
                }
            };
            cost[idx(i, j)] = c + prev_cost;
            len[idx(i, j)] = prev_len + 1;
        }
    }

    let path = backtrack(&cost, &len, ma, mb);
    let path_len = path.len();
    debug_assert_eq!(path_len, len[idx(ma - 1, mb - 1)]);
    debug_assert!(is_weakly_ordered(&path, ma, mb));
    let cumulative = cost[idx(ma - 1, mb - 1)];
    Ok(DtwResult {
        distance: cumulative / path_len as f64,
        cumulative,
        path,
        path_len,
    })
}

fn choose_step(cost: &[f64], len: &[usize], diag: usize, up: usize, left: usize) -> Step {
    let best = cost[diag].min(cost[up]).min(cost[left]);
    if cost[diag] == best {
        return Step::Diagonal;
    }
    match (cost[up] == best, cost[left] == best) {
        (true, true) => {
            if len[left] < len[up] {
                Step::Left
            } else {
                Step::Up
            }
        }
        (true, false) => Step::Up,
        _ => Step::Left,
    }
}

fn backtrack(cost: &[f64], len: &[usize], ma: usize, mb: usize) -> Vec<(usize, usize)> {
    let idx = |i: usize, j: usize| i * mb + j;
    let (mut i, mut j) = (ma - 1, mb - 1);
    let mut path = vec![(i + 1, j + 1)];
    while (i, j) != (0, 0) {
        (i, j) = match (i, j) {
            (0, _) => (0, j - 1),
            (_, 0) => (i - 1, 0),
            _ => match choose_step(cost, len, idx(i - 1, j - 1), idx(i - 1, j), idx(i, j - 1)) {
                Step::Diagonal => (i - 1, j - 1),
                Step::Up => (i - 1, j),
                Step::Left => (i, j - 1),
            },
        };
        path.push((i + 1, j + 1));
    }
    path.reverse();
    path
}

/// `true` when `path` runs from `(1, 1)` to `(m_a, m_b)` and every step
/// advances `i`, `j` or both by exactly one.
pub fn is_weakly_ordered(path: &[(usize, usize)], ma: usize, mb: usize) -> bool {
    if path.first() != Some(&(1, 1)) || path.last() != Some(&(ma, mb)) {
        return false;
    }
    path.windows(2).all(|w| {
        let (di, dj) = (w[1].0 as isize - w[0].0 as isize, w[1].1 as isize - w[0].1 as isize);
        matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
    })
}

/// Mean DTW-MT distance from `t` to every trajectory in `pool`.
pub fn average_distance(t: &Trajectory, pool: &[&Trajectory], params: &DtwParams) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut sum = 0.0;
    for u in pool {
        sum += dtw_mt(t, u, params)?.distance;
    }
    Ok(sum / pool.len() as f64)
}

/// Symmetric matrix of pairwise distances, computed in parallel.
pub fn distance_matrix(trajs: &[&Trajectory], params: &DtwParams) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    let n = trajs.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j < i {
                        Ok(f64::NAN)
                    } else if i == j {
                        Ok(0.0)
                    } else {
                        dtw_mt(trajs[i], trajs[j], params).map(|r| r.distance)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut m = rows;
    for i in 0..n {
        let (upper, lower) = m.split_at_mut(i);
        for (j, row) in upper.iter().enumerate() {
            lower[0][j] = row[i];
        }
    }
    Ok(m)
}
