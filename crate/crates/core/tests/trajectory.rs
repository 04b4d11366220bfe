use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use robotransfer_core::trajectory::{apportion, gripper_runs};
use robotransfer_core::{interpolate, normalize_length, slerp, GripperState, Quat, Source, Trajectory, Vec3, Waypoint};

fn qmul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [ax, ay, az, aw] = a;
    let [bx, by, bz, bw] = b;
    [
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ]
}

fn axis_angle(axis: [f64; 3], angle: f64) -> [f64; 4] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let s = (angle / 2.0).sin() / n;
    [axis[0] * s, axis[1] * s, axis[2] * s, (angle / 2.0).cos()]
}

fn same_rotation(a: [f64; 4], b: [f64; 4]) -> f64 {
    let d: f64 = (0..4).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
    let s: f64 = (0..4).map(|k| (a[k] + b[k]).powi(2)).sum::<f64>().sqrt();
    d.min(s)
}

/// Largest-remainder apportionment with a floor of one, by exhaustive
/// search: the count vector with every entry >= 1 summing to `target` that
/// minimizes the squared deviation from the exact quotas.
fn brute_apportion(lengths: &[usize], target: usize) -> Vec<Vec<usize>> {
    let total: usize = lengths.iter().sum();
    let quota: Vec<f64> = lengths
        .iter()
        .map(|&l| target as f64 * l as f64 / total as f64)
        .collect();
    let mut best: Vec<Vec<usize>> = Vec::new();
    let mut best_score = f64::INFINITY;
    fn rec(
        i: usize,
        left: usize,
        cur: &mut Vec<usize>,
        quota: &[f64],
        best: &mut Vec<Vec<usize>>,
        best_score: &mut f64,
    ) {
        let n = quota.len();
        if i == n - 1 {
            if left == 0 {
                return;
            }
            cur.push(left);
            let score: f64 = cur.iter().zip(quota).map(|(&c, q)| (c as f64 - q).powi(2)).sum();
            if score < *best_score - 1e-12 {
                *best_score = score;
                best.clear();
                best.push(cur.clone());
            } else if (score - *best_score).abs() <= 1e-12 {
                best.push(cur.clone());
            }
            cur.pop();
            return;
        }
        for c in 1..=left.saturating_sub(n - 1 - i) {
            cur.push(c);
            rec(i + 1, left - c, cur, quota, best, best_score);
            cur.pop();
        }
    }
    rec(0, target, &mut Vec::new(), &quota, &mut best, &mut best_score);
    best
}

fn wp(g: GripperState, t: [f64; 3], q: [f64; 4]) -> Waypoint {
    Waypoint::new(g, Vec3::from(t), Quat::from(q)).unwrap()
}

fn gripper_strategy() -> impl Strategy<Value = GripperState> {
    prop_oneof![
        Just(GripperState::Open),
        Just(GripperState::Closed),
        Just(GripperState::Holding)
    ]
}

fn waypoint_strategy() -> impl Strategy<Value = Waypoint> {
    (
        gripper_strategy(),
        prop::array::uniform3(-0.3f64..0.3),
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..3.0,
    )
        .prop_filter("axis must be non-degenerate", |(_, _, axis, _)| {
            axis.iter().map(|a| a * a).sum::<f64>() > 1e-3
        })
        .prop_map(|(g, t, axis, angle)| wp(g, t, axis_angle(axis, angle)))
}

fn trajectory_strategy(max: usize) -> impl Strategy<Value = Trajectory> {
    prop::collection::vec(waypoint_strategy(), 1..max).prop_map(|w| Trajectory::new("p", Source::Synthetic, w).unwrap())
}

proptest! {
    #[test]
    fn slerp_follows_the_axis_angle_oracle(
        axis0 in prop::array::uniform3(-1.0f64..1.0),
        a0 in 0.0f64..3.1,
        axis in prop::array::uniform3(-1.0f64..1.0),
        theta in 1e-3f64..3.1,
        t in 0.0f64..=1.0,
    ) {
        prop_assume!(axis0.iter().map(|a| a * a).sum::<f64>() > 1e-3);
        prop_assume!(axis.iter().map(|a| a * a).sum::<f64>() > 1e-3);
        let q0 = axis_angle(axis0, a0);
        let q1 = qmul(q0, axis_angle(axis, theta));
        let s = slerp(Quat::from(q0), Quat::from(q1), t).unwrap();
        prop_assert!((s.norm() - 1.0).abs() < 1e-9);
        prop_assert!(same_rotation(s.to_array(), qmul(q0, axis_angle(axis, t * theta))) < 1e-9);
    }

    #[test]
    fn apportionment_matches_exhaustive_search(
        lengths in prop::collection::vec(1usize..12, 1..5),
        extra in 0usize..10,
    ) {
        let target = lengths.len() + extra;
        let counts = apportion(&lengths, target).unwrap();
        prop_assert_eq!(counts.iter().sum::<usize>(), target);
        prop_assert!(counts.iter().all(|&c| c >= 1));
        let optimal = brute_apportion(&lengths, target);
        prop_assert!(optimal.contains(&counts), "{:?} not among {:?}", counts, optimal);
    }

    #[test]
    fn normalization_keeps_the_gripper_sequence(traj in trajectory_strategy(25), target in 1usize..30) {
        let runs = gripper_runs(&traj.waypoints);
        match normalize_length(&traj, target) {
            Ok(n) => {
                prop_assert_eq!(n.len(), target);
                let states = |r: &[(GripperState, usize, usize)]| r.iter().map(|x| x.0).collect::<Vec<_>>();
                prop_assert_eq!(states(&gripper_runs(&n.waypoints)), states(&runs));
                prop_assert_eq!(n.waypoints.first().unwrap().translation, traj.waypoints[0].translation);
                for w in &n.waypoints {
                    prop_assert!((w.rotation.norm() - 1.0).abs() < 1e-9);
                }
            }
            Err(_) => prop_assert!(runs.len() > target),
        }
    }

    #[test]
    fn normalization_is_idempotent(traj in trajectory_strategy(25), target in 4usize..30) {
        if let Ok(once) = normalize_length(&traj, target) {
            let twice = normalize_length(&once, target).unwrap();
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn interpolation_keeps_authored_waypoints(traj in trajectory_strategy(10), samples in 1usize..6) {
        prop_assume!(traj.len() >= 2);
        let out = interpolate(&traj, samples).unwrap();
        prop_assert_eq!(out.len(), traj.len() + (traj.len() - 1) * samples);
        for (i, w) in traj.waypoints.iter().enumerate() {
            prop_assert_eq!(&out.waypoints[i * (samples + 1)], w);
        }
    }
}

#[test]
fn apportionment_of_a_run_at_its_share_is_stable() {
    assert_eq!(apportion(&[3, 6, 6], 15).unwrap(), vec![3, 6, 6]);
    assert_eq!(apportion(&[1, 1, 1], 15).unwrap(), vec![5, 5, 5]);
}

#[test]
fn interpolated_translation_is_linear() {
    let a = wp(GripperState::Open, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]);
    let b = wp(GripperState::Closed, [0.4, -0.2, 0.1], axis_angle([0.0, 0.0, 1.0], 1.0));
    let t = Trajectory::new("x", Source::Crowd, vec![a, b]).unwrap();
    let out = interpolate(&t, 3).unwrap();
    for (k, w) in out.waypoints.iter().enumerate() {
        let f = k as f64 / 4.0;
        assert_abs_diff_eq!(w.translation.x, 0.4 * f, epsilon = 1e-12);
        assert_abs_diff_eq!(w.translation.y, -0.2 * f, epsilon = 1e-12);
        assert_abs_diff_eq!(w.rotation.angle_to(Quat::IDENTITY), f, epsilon = 1e-9);
    }
}
