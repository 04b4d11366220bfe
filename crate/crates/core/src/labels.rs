//! Noise handling over crowd demonstrations and binary example generation.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dtw::{distance_matrix, dtw_mt, DtwParams};
use crate::error::{Error, Result};
use crate::frame::{PartFrame, PointCloudPart};
use crate::trajectory::Trajectory;

/// One `(part, instruction)` pair with its crowd demonstrations, all in the
/// part frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub object_id: String,
    pub manual_id: String,
    pub part: PointCloudPart,
    pub frame: PartFrame,
    pub instruction: String,
    pub demos: Vec<Trajectory>,
    /// Reference demonstration, used only for evaluation.
    pub expert_demo: Option<Trajectory>,
    /// Cross-validation fold recorded in the dataset, if any.
    pub fold: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseThresholds {
    /// Distances below this make a positive example.
    pub t_g: f64,
    /// Distances above this make a negative example.
    pub t_w: f64,
}

impl Default for NoiseThresholds {
    fn default() -> Self {
        NoiseThresholds { t_g: 7.0, t_w: 15.0 }
    }
}

impl NoiseThresholds {
    pub fn validate(&self) -> Result<()> {
        // t_w may be +inf (no negatives); t_g = 0 admits no extra positives
        if self.t_g.is_nan() || self.t_w.is_nan() || self.t_g < 0.0 || self.t_g >= self.t_w {
            return Err(Error::InvalidThresholds {
                t_g: self.t_g,
                t_w: self.t_w,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    #[serde(flatten)]
    pub thresholds: NoiseThresholds,
    /// Negatives kept per task, as a multiple of that task's positives.
    pub negative_ratio: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            thresholds: NoiseThresholds::default(),
            negative_ratio: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    #[serde(rename = "task")]
    pub task_ref: String,
    #[serde(rename = "traj")]
    pub traj_ref: String,
    pub label: u8,
    /// Distance to the task's best demonstration (0 for the best itself);
    /// absent when labels were not derived from distances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Index into `task.demos` of the demonstration with the smallest average
/// distance to all demonstrations of the task (itself included). Exact ties
/// go to the lowest trajectory id.
pub fn best_demo_index(task: &TaskInstance, params: &DtwParams) -> Result<usize> {
    if task.demos.is_empty() {
        return Err(Error::EmptyPool);
    }
    let demos: Vec<&Trajectory> = task.demos.iter().collect();
    let matrix = distance_matrix(&demos, params)?;
    let n = demos.len() as f64;
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in matrix.iter().enumerate() {
        let avg = row.iter().sum::<f64>() / n;
        best = match best {
            None => Some((i, avg)),
            Some((b, b_avg)) => {
                if avg < b_avg || (avg == b_avg && demos[i].id < demos[b].id) {
                    Some((i, avg))
                } else {
                    Some((b, b_avg))
                }
            }
        };
    }
    Ok(best.expect("non-empty").0)
}

/// The crowd demonstration with the smallest average distance to the others.
pub fn select_best_demo<'a>(task: &'a TaskInstance, params: &DtwParams) -> Result<&'a Trajectory> {
    best_demo_index(task, params).map(|i| &task.demos[i])
}

/// Labels pool trajectories against each task's best demonstration.
///
/// Per task: the best demonstration is positive; every pool trajectory closer
/// than `t_g` is positive; every pool trajectory farther than `t_w` is
/// negative; anything in between is skipped. Examples are unique per
/// `(task, trajectory)`. Negatives beyond `negative_ratio ×` positives are
/// thinned by taking evenly spaced ranks of the distance-sorted negatives.
pub fn generate_examples(
    tasks: &[&TaskInstance],
    pool: &[&Trajectory],
    config: &LabelConfig,
    params: &DtwParams,
) -> Result<Vec<LabeledExample>> {
    use rayon::prelude::*;
    config.thresholds.validate()?;
    let per_task: Vec<Vec<LabeledExample>> = tasks
        .par_iter()
        .map(|task| {
            let best = select_best_demo(task, params)?;
            let deltas = pool
                .iter()
                .map(|t| dtw_mt(best, t, params).map(|r| r.distance))
                .collect::<Result<Vec<f64>>>()?;
            Ok(label_task(task, best, pool, &deltas, config))
        })
        .collect::<Result<_>>()?;
    Ok(per_task.into_iter().flatten().collect())
}

fn label_task(
    task: &TaskInstance,
    best: &Trajectory,
    pool: &[&Trajectory],
    deltas: &[f64],
    config: &LabelConfig,
) -> Vec<LabeledExample> {
    let NoiseThresholds { t_g, t_w } = config.thresholds;
    let mut seen = HashSet::new();
    seen.insert(best.id.as_str());
    let mut positives = vec![LabeledExample {
        task_ref: task.id.clone(),
        traj_ref: best.id.clone(),
        label: 1,
        delta: Some(0.0),
    }];
    let mut negatives = Vec::new();
    for (t, &d) in pool.iter().zip(deltas) {
        if !seen.insert(t.id.as_str()) {
            continue;
        }
        let example = |label| LabeledExample {
            task_ref: task.id.clone(),
            traj_ref: t.id.clone(),
            label,
            delta: Some(d),
        };
        if d < t_g {
            positives.push(example(1));
        } else if d > t_w {
            negatives.push(example(0));
        }
    }
    let cap = config.negative_ratio.saturating_mul(positives.len());
    if negatives.len() > cap {
        negatives.sort_by(|a, b| {
            a.delta
                .unwrap_or(0.0)
                .total_cmp(&b.delta.unwrap_or(0.0))
                .then_with(|| a.traj_ref.cmp(&b.traj_ref))
        });
        let n = negatives.len();
        negatives = (0..cap).map(|k| negatives[k * n / cap].clone()).collect();
    }
    positives.extend(negatives);
    positives
}

/// Labels without noise handling: every crowd demonstration of a task is
/// trusted as positive, and negatives are other tasks' demonstrations,
/// `negative_ratio ×` positives, picked at evenly spaced positions of the pool.
pub fn generate_examples_trusting(
    tasks: &[&TaskInstance],
    pool: &[&Trajectory],
    negative_ratio: usize,
) -> Vec<LabeledExample> {
    let mut out = Vec::new();
    for task in tasks {
        let own: HashSet<&str> = task.demos.iter().map(|d| d.id.as_str()).collect();
        for d in &task.demos {
            out.push(LabeledExample {
                task_ref: task.id.clone(),
                traj_ref: d.id.clone(),
                label: 1,
                delta: None,
            });
        }
        let others: Vec<&&Trajectory> = pool.iter().filter(|t| !own.contains(t.id.as_str())).collect();
        let cap = (negative_ratio * task.demos.len()).min(others.len());
        if cap == 0 {
            continue;
        }
        // offset by a per-task stride so tasks do not all draw the same negatives
        let offset = out.len() % others.len();
        for k in 0..cap {
            let t = others[(offset + k * others.len() / cap) % others.len()];
            out.push(LabeledExample {
                task_ref: task.id.clone(),
                traj_ref: t.id.clone(),
                label: 0,
                delta: None,
            });
        }
    }
    out
}
