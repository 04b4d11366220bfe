use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quaternion: norm {norm} deviates from 1 by more than 1e-6")]
    InvalidQuaternion { norm: f64 },

    #[error("trajectory too short: need at least {needed} waypoints, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("cannot preserve gripper sequence: {runs} gripper runs do not fit in {target} waypoints")]
    CannotPreserveGripperSequence { runs: usize, target: usize },

    #[error("invalid value for {field}: {reason}")]
    InvalidValue { field: String, reason: String },

    #[error("point cloud needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("empty pool")]
    EmptyPool,

    #[error("empty vocabulary: corpus contains no usable tokens")]
    EmptyVocabulary,

    #[error("invalid noise thresholds: t_g = {t_g}, t_w = {t_w} (need 0 <= t_g < t_w)")]
    InvalidThresholds { t_g: f64, t_w: f64 },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("training diverged in {stage} at epoch {epoch}: loss is not finite")]
    Divergence { stage: String, epoch: usize },

    #[error("no training data")]
    NoData,

    #[error("need at least {needed} manuals for {needed}-fold cross-validation, got {got}")]
    TooFewManuals { needed: usize, got: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unresolved reference: {0}")]
    Reference(String),

    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
