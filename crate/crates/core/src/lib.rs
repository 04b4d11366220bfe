//! Trajectory transfer engine.
//!
//! Given a segmented object part and a natural-language instruction, rank a
//! library of previously demonstrated manipulation trajectories and return
//! the one that transfers best.

pub mod config;
pub mod dataset;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod features;
pub mod frame;
pub mod labels;
pub mod math;
pub mod net;
pub mod pipeline;
pub mod quat;
pub mod synth;
pub mod trajectory;

pub use config::{Config, EvalConfig};
pub use dataset::{Dataset, Metadata};
pub use dtw::{average_distance, dtw_mt, waypoint_cost, DtwParams, DtwResult};
pub use error::{Error, Result};
pub use eval::{evaluate, make_folds, EvalReport, FoldSplit};
pub use features::{FeatureConfig, FeatureVector, OccupancyGrid, Vocabulary};
pub use frame::{compute_part_frame, from_part_frame, to_part_frame, PartFrame, PointCloudPart};
pub use labels::{generate_examples, select_best_demo, LabelConfig, LabeledExample, NoiseThresholds, TaskInstance};
pub use math::{Mat3, Vec3};
pub use net::{Checkpoint, Featurizer, MultimodalNet, NetConfig, Ranked, TransferModel, Wiring};
pub use quat::{slerp, Quat};
pub use synth::{generate_synthetic, SyntheticSpec};
pub use trajectory::{interpolate, normalize_length, GripperState, Source, Trajectory, Waypoint};
