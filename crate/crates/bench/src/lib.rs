//! Fixtures shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robotransfer_core::features::{build_vocabulary, StopWords};
use robotransfer_core::{
    generate_synthetic, Dataset, FeatureConfig, Featurizer, GripperState, MultimodalNet, NetConfig, Quat, Source,
    SyntheticSpec, Trajectory, TransferModel, Vec3, Waypoint,
};

/// Random trajectory with `len` waypoints near the origin.
pub fn random_trajectory(id: &str, len: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = [GripperState::Open, GripperState::Closed, GripperState::Holding];
    let waypoints = (0..len)
        .map(|_| {
            let t = Vec3::new(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(0.0..0.3),
            );
            let axis = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.1..1.0),
            );
            let q = Quat::from_axis_angle(axis.normalized(), rng.gen_range(0.0..std::f64::consts::PI));
            Waypoint::new(states[rng.gen_range(0..3)], t, q).expect("unit quaternion")
        })
        .collect();
    Trajectory::new(id, Source::Synthetic, waypoints).expect("valid trajectory")
}

pub fn dataset(n_tasks: usize, points_per_part: usize) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        n_tasks,
        points_per_part,
        rng_seed: 11,
        ..SyntheticSpec::default()
    })
    .expect("valid spec")
}

/// Untrained model with the default widths over `ds`'s vocabulary.
pub fn untrained_model(ds: &Dataset) -> TransferModel {
    let corpus: Vec<&str> = ds.tasks.iter().map(|t| t.instruction.as_str()).collect();
    let vocab = build_vocabulary(&corpus, &StopWords::default()).expect("vocabulary");
    let featurizer = Featurizer::new(vocab, FeatureConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = MultimodalNet::new(NetConfig::default(), featurizer.input_dims(), &mut rng).expect("network");
    TransferModel::new(net, featurizer).expect("matching dimensions")
}
