//! Seeded synthetic datasets: parametric part clouds, instruction templates
//! and clustered crowd demonstrations with outliers.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Metadata};
use crate::error::{Error, Result};
use crate::frame::{compute_part_frame, ColoredPoint, PointCloudPart, DEFAULT_GRAVITY};
use crate::labels::TaskInstance;
use crate::math::Vec3;
use crate::quat::Quat;
use crate::trajectory::{GripperState, Source, Trajectory, Waypoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Knob,
    Handle,
    Lever,
    Switch,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Knob, Family::Handle, Family::Lever, Family::Switch];

    fn actions(self) -> &'static [Action] {
        match self {
            Family::Knob => &[Action::TurnClockwise, Action::TurnCounterclockwise],
            Family::Handle => &[Action::Pull, Action::Push],
            Family::Lever => &[Action::Lift, Action::PressDown],
            Family::Switch => &[Action::Press, Action::Slide],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    TurnClockwise,
    TurnCounterclockwise,
    Pull,
    Push,
    Lift,
    PressDown,
    Press,
    Slide,
}

impl Action {
    fn templates(self) -> &'static [&'static str] {
        match self {
            Action::TurnClockwise => &[
                "turn the knob clockwise",
                "rotate the dial clockwise",
                "twist the knob clockwise to increase",
            ],
            Action::TurnCounterclockwise => &[
                "turn the knob counterclockwise",
                "rotate the dial counterclockwise",
                "twist the knob counterclockwise to decrease",
            ],
            Action::Pull => &[
                "pull the handle",
                "pull the drawer handle open",
                "grab the handle and pull it toward you",
            ],
            Action::Push => &[
                "push the handle",
                "push the drawer handle closed",
                "press the handle to push it shut",
            ],
            Action::Lift => &["lift the lever up", "raise the lever", "pull the lever upward"],
            Action::PressDown => &["press the lever down", "push the lever downward", "lower the lever"],
            Action::Press => &["press the button", "push the power button", "press the switch once"],
            Action::Slide => &[
                "slide the switch to the right",
                "move the slider switch right",
                "slide the toggle over",
            ],
        }
    }
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub name: String,
    /// Number of (part, instruction) tasks.
    pub n_tasks: usize,
    pub demos_per_task: usize,
    /// Fraction of each task's demos that are outliers.
    pub outlier_fraction: f64,
    /// Per-axis translation noise of good demos, meters.
    pub translation_sigma: f64,
    /// Rotation noise of good demos, radians.
    pub rotation_sigma: f64,
    pub families: Vec<Family>,
    /// Upper bound on instructions per manual (one manual per object).
    pub max_instructions_per_manual: usize,
    pub points_per_part: usize,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            name: "synthetic".into(),
            n_tasks: 40,
            demos_per_task: 8,
            outlier_fraction: 0.2,
            translation_sigma: 0.003,
            rotation_sigma: 0.05,
            families: Family::ALL.to_vec(),
            max_instructions_per_manual: 2,
            points_per_part: 400,
            rng_seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 {
            return Err(Error::invalid("n_tasks", "must be positive"));
        }
        if self.demos_per_task == 0 {
            return Err(Error::invalid("demos_per_task", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::invalid("outlier_fraction", "must lie in [0, 1]"));
        }
        for (name, v) in [
            ("translation_sigma", self.translation_sigma),
            ("rotation_sigma", self.rotation_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        if self.families.is_empty() {
            return Err(Error::invalid("families", "must not be empty"));
        }
        if self.max_instructions_per_manual == 0 {
            return Err(Error::invalid("max_instructions_per_manual", "must be positive"));
        }
        if self.points_per_part < 50 {
            return Err(Error::invalid("points_per_part", "must be at least 50"));
        }
        Ok(())
    }

    /// Number of outlier demos per task.
    pub fn outliers_per_task(&self) -> usize {
        ((self.outlier_fraction * self.demos_per_task as f64).round() as usize).min(self.demos_per_task)
    }
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    family: Family,
    length: f64,
    width: f64,
    height: f64,
}

impl Shape {
    fn sample(family: Family, rng: &mut ChaCha8Rng) -> Shape {
        let (length, width, height) = match family {
            Family::Knob => (
                rng.gen_range(0.045..0.06),
                rng.gen_range(0.03..0.038),
                rng.gen_range(0.015..0.025),
            ),
            Family::Handle => (
                rng.gen_range(0.10..0.15),
                rng.gen_range(0.012..0.018),
                rng.gen_range(0.02..0.03),
            ),
            Family::Lever => (
                rng.gen_range(0.12..0.17),
                rng.gen_range(0.015..0.02),
                rng.gen_range(0.012..0.018),
            ),
            Family::Switch => (
                rng.gen_range(0.04..0.055),
                rng.gen_range(0.025..0.032),
                rng.gen_range(0.01..0.015),
            ),
        };
        Shape {
            family,
            length,
            width,
            height,
        }
    }

    /// Points in the shape's local frame; each family carries a feature at
    /// one end of its long axis so the principal-axis sign is well defined.
    fn points(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        let (l, w, h) = (self.length, self.width, self.height);
        let mut pts = Vec::with_capacity(n);
        let main = n * 3 / 4;
        for _ in 0..main {
            let p = match self.family {
                Family::Knob => {
                    let a = rng.gen_range(0.0..2.0 * PI);
                    let r = rng.gen::<f64>().sqrt();
                    Vec3::new(0.5 * l * r * a.cos(), 0.5 * w * r * a.sin(), rng.gen_range(0.0..h))
                }
                _ => Vec3::new(
                    rng.gen_range(-0.5 * l..0.5 * l),
                    rng.gen_range(-0.5 * w..0.5 * w),
                    rng.gen_range(0.0..h),
                ),
            };
            pts.push(p);
        }
        for _ in main..n {
            let p = match self.family {
                // pointer nub on the rim
                Family::Knob => Vec3::new(
                    rng.gen_range(0.4 * l..0.55 * l),
                    rng.gen_range(-0.004..0.004),
                    rng.gen_range(0.5 * h..h),
                ),
                // mounting post
                Family::Handle => Vec3::new(
                    rng.gen_range(0.3 * l..0.45 * l),
                    rng.gen_range(-0.5 * w..0.5 * w),
                    rng.gen_range(-0.03..0.0),
                ),
                // pivot hub
                Family::Lever => Vec3::new(
                    rng.gen_range(-0.5 * l..-0.35 * l),
                    rng.gen_range(-1.5 * w..1.5 * w),
                    rng.gen_range(-0.01..h + 0.01),
                ),
                // toggle tab
                Family::Switch => Vec3::new(
                    rng.gen_range(0.2 * l..0.4 * l),
                    rng.gen_range(-0.3 * w..0.3 * w),
                    rng.gen_range(h..h + 0.012),
                ),
            };
            pts.push(p);
        }
        pts
    }
}

fn wp(g: GripperState, t: [f64; 3], q: Quat) -> Waypoint {
    Waypoint::new(g, Vec3::from(t), q).expect("generated waypoint is valid")
}

/// Ground-truth trajectory in the canonical part frame.
fn ground_truth(action: Action, shape: &Shape, id: String) -> Trajectory {
    use GripperState::{Closed, Open};
    let down = Quat::from_axis_angle(Vec3::X, PI);
    let front = Quat::from_axis_angle(Vec3::X, -FRAC_PI_2);
    let back = Quat::from_axis_angle(Vec3::X, FRAC_PI_2);
    let side = Quat::from_axis_angle(Vec3::Y, FRAC_PI_2);
    let diag = Quat::from_axis_angle(Vec3::X, -0.75 * PI);
    let yawed = |a: f64, q: Quat| Quat::from_axis_angle(Vec3::Z, a).mul(q);
    let tilted = |a: f64| Quat::from_axis_angle(Vec3::Y, a).mul(down);
    let (l, h) = (shape.length, shape.height);
    let top = 0.5 * h;
    let waypoints = match action {
        Action::TurnClockwise | Action::TurnCounterclockwise => {
            let turn = if action == Action::TurnClockwise {
                -FRAC_PI_2
            } else {
                FRAC_PI_2
            };
            let start = -0.5 * turn;
            vec![
                wp(Open, [0.0, 0.0, top + 0.10], yawed(start, down)),
                wp(Open, [0.0, 0.0, top + 0.015], yawed(start, down)),
                wp(Closed, [0.0, 0.0, top + 0.01], yawed(start, down)),
                wp(Closed, [0.0, 0.0, top + 0.01], yawed(start + 0.5 * turn, down)),
                wp(Closed, [0.0, 0.0, top + 0.01], yawed(start + turn, down)),
                wp(Open, [0.0, 0.0, top + 0.015], yawed(start + turn, down)),
                wp(Open, [0.0, 0.0, top + 0.10], yawed(start + turn, down)),
            ]
        }
        Action::Pull => vec![
            wp(Open, [0.0, 0.12, 0.0], front),
            wp(Open, [0.0, 0.03, 0.0], front),
            wp(Closed, [0.0, 0.015, 0.0], front),
            wp(Closed, [0.0, 0.10, 0.0], front),
            wp(Closed, [0.0, 0.18, 0.0], front),
            wp(Open, [0.0, 0.20, 0.0], front),
        ],
        Action::Push => vec![
            wp(Closed, [0.0, -0.12, 0.03], back),
            wp(Closed, [0.0, -0.03, 0.01], back),
            wp(Closed, [0.0, -0.01, 0.01], back),
            wp(Closed, [0.0, 0.05, 0.01], back),
            wp(Closed, [0.0, 0.05, 0.12], back),
        ],
        Action::Lift => vec![
            wp(Open, [0.45 * l, 0.0, 0.10], down),
            wp(Open, [0.45 * l, 0.0, 0.02], down),
            wp(Closed, [0.45 * l, 0.0, 0.01], down),
            wp(Closed, [0.4 * l, 0.0, 0.08], tilted(-0.7)),
            wp(Closed, [0.3 * l, 0.0, 0.16], tilted(-1.2)),
            wp(Open, [0.3 * l, 0.0, 0.18], tilted(-1.2)),
        ],
        Action::PressDown => vec![
            wp(Closed, [-0.2 * l, 0.12, 0.08], front),
            wp(Closed, [-0.2 * l, 0.0, 0.04], yawed(FRAC_PI_2, down)),
            wp(Closed, [-0.2 * l, 0.0, -0.03], yawed(FRAC_PI_2, down)),
            wp(Closed, [-0.2 * l, 0.0, -0.08], yawed(FRAC_PI_2, down)),
            wp(Closed, [-0.2 * l, 0.12, 0.08], front),
        ],
        Action::Press => vec![
            wp(Closed, [-0.1 * l, 0.10, 0.10], diag),
            wp(Closed, [-0.1 * l, 0.02, 0.02], diag),
            wp(Closed, [-0.1 * l, 0.004, 0.004], diag),
            wp(Closed, [-0.1 * l, 0.10, 0.10], diag),
        ],
        Action::Slide => vec![
            wp(Open, [-0.12, 0.0, 0.03], side),
            wp(Open, [-0.03, 0.0, 0.015], side),
            wp(Closed, [-0.015, 0.0, 0.015], side),
            wp(Closed, [0.05, 0.0, 0.015], side),
            wp(Open, [0.05, 0.0, 0.08], side),
        ],
    };
    Trajectory::new(id, Source::Expert, waypoints).expect("ground truth is valid")
}

fn perturb(gt: &Trajectory, id: String, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Trajectory {
    let nt = Normal::new(0.0, spec.translation_sigma).expect("sigma validated");
    let nr = Normal::new(0.0, spec.rotation_sigma).expect("sigma validated");
    let waypoints = gt
        .waypoints
        .iter()
        .map(|w| {
            let dt = Vec3::new(nt.sample(rng), nt.sample(rng), nt.sample(rng));
            let dq = Quat::from_axis_angle(random_unit(rng), nr.sample(rng));
            Waypoint::new(w.gripper, w.translation.add(dt), dq.mul(w.rotation)).expect("perturbed waypoint is valid")
        })
        .collect();
    Trajectory::new(id, Source::Synthetic, waypoints).expect("perturbed trajectory is valid")
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v.scale(1.0 / n);
        }
    }
}

fn random_quat(rng: &mut ChaCha8Rng) -> Quat {
    Quat::from_axis_angle(random_unit(rng), rng.gen_range(0.0..PI))
}

/// A careless demonstration: either a wrong action's motion or a wander
/// away from the part with arbitrary orientations and gripper toggles.
fn outlier(own: Action, shape: &Shape, id: String, k: usize, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Trajectory {
    if k.is_multiple_of(2) {
        let others: Vec<Action> = Family::ALL
            .iter()
            .filter(|f| **f != shape.family)
            .flat_map(|f| f.actions().iter().copied())
            .filter(|a| *a != own)
            .collect();
        let wrong = *others.choose(rng).expect("other actions exist");
        let offset = Vec3::new(
            rng.gen_range(-0.08..0.08),
            rng.gen_range(-0.08..0.08),
            rng.gen_range(0.05..0.12),
        );
        let base = ground_truth(wrong, shape, id.clone());
        let moved = base.map_waypoints(|w| Waypoint {
            translation: w.translation.add(offset),
            ..*w
        });
        let mut t = perturb(&moved, id, spec, rng);
        t.source = Source::Synthetic;
        t
    } else {
        let m = rng.gen_range(3..=6);
        let mut g = if rng.gen::<bool>() {
            GripperState::Open
        } else {
            GripperState::Closed
        };
        let waypoints = (0..m)
            .map(|_| {
                if rng.gen::<f64>() < 0.5 {
                    g = g.toggled();
                }
                let t = Vec3::new(
                    rng.gen_range(-0.25..0.25),
                    rng.gen_range(-0.25..0.25),
                    rng.gen_range(0.1..0.35),
                );
                Waypoint::new(g, t, random_quat(rng)).expect("random waypoint is valid")
            })
            .collect();
        Trajectory::new(id, Source::Synthetic, waypoints).expect("random trajectory is valid")
    }
}

/// Builds a dataset deterministically from `spec`. Demonstrations are stored
/// in part frames; the expert demonstration is the noise-free ground truth.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let n_out = spec.outliers_per_task();
    let mut tasks = Vec::with_capacity(spec.n_tasks);
    let mut object = 0usize;
    while tasks.len() < spec.n_tasks {
        let family = spec.families[object % spec.families.len()];
        let object_id = format!("obj{object:04}");
        let shape = Shape::sample(family, &mut rng);

        let yaw = rng.gen_range(0.0..2.0 * PI);
        let pose = Quat::from_axis_angle(Vec3::Z, yaw);
        let place = Vec3::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(0.6..1.0),
        );
        let noise = Normal::new(0.0, 0.001).expect("constant sigma");
        let color = [
            rng.gen_range(0.0..255.0f64).floor(),
            rng.gen_range(0.0..255.0f64).floor(),
            90.0,
        ];
        let points: Vec<ColoredPoint> = shape
            .points(spec.points_per_part, &mut rng)
            .into_iter()
            .map(|p| {
                let jitter = Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                ColoredPoint {
                    position: pose.rotate(p.add(jitter)).add(place),
                    rgb: color,
                }
            })
            .collect();
        let part_id = format!("{object_id}-p0");
        let part = PointCloudPart::new(part_id, points)?;
        let frame = compute_part_frame(&part, DEFAULT_GRAVITY)?;

        let mut actions = family.actions().to_vec();
        actions.shuffle(&mut rng);
        let count = rng
            .gen_range(1..=spec.max_instructions_per_manual.min(actions.len()))
            .min(spec.n_tasks - tasks.len());
        for (i, &action) in actions.iter().take(count).enumerate() {
            let task_id = format!("{object_id}-t{i}");
            let template = *action.templates().choose(&mut rng).expect("templates exist");
            let expert = ground_truth(action, &shape, format!("{task_id}-expert"));
            let demos = (0..spec.demos_per_task)
                .map(|k| {
                    let id = format!("{task_id}-d{k:02}");
                    if k < spec.demos_per_task - n_out {
                        perturb(&expert, id, spec, &mut rng)
                    } else {
                        outlier(action, &shape, id, k, spec, &mut rng)
                    }
                })
                .collect::<Vec<_>>();
            let mut demos = demos;
            demos.shuffle(&mut rng);
            tasks.push(TaskInstance {
                id: task_id,
                object_id: object_id.clone(),
                manual_id: format!("{object_id}-m"),
                part: part.clone(),
                frame,
                instruction: template.to_string(),
                demos,
                expert_demo: Some(expert),
                fold: None,
            });
        }
        object += 1;
    }
    Dataset::new(Metadata::new(spec.name.clone()), tasks, None)
}

/// Whether a demo id produced by [`generate_synthetic`] is an outlier.
pub fn is_outlier_id(spec: &SyntheticSpec, demo_id: &str) -> bool {
    let n_out = spec.outliers_per_task();
    demo_id
        .rsplit_once("-d")
        .and_then(|(_, k)| k.parse::<usize>().ok())
        .is_some_and(|k| k >= spec.demos_per_task - n_out)
}
