//! Three-modality ranking network: model, training and inference.

mod checkpoint;
mod config;
mod model;
mod train;

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

pub use checkpoint::Checkpoint;
pub use config::{NetConfig, Wiring};
pub use model::{logistic_nll, sigmoid, Block, Grads, MultimodalNet};
pub use train::{finetune, pretrain, BlockPretrainLog, FinetuneLog, PretrainLog};

use crate::error::{Error, Result};
use crate::features::{
    embed_language, embed_part_trajectory, embed_point_cloud, FeatureConfig, FeatureVector, Vocabulary, GRID_CELLS,
};
use crate::frame::{PartFrame, PointCloudPart};
use crate::trajectory::Trajectory;

/// Turns raw modalities into network inputs, sharing each encoded point
/// cloud and trajectory between the feature vectors that use it.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub vocab: Vocabulary,
    pub config: FeatureConfig,
}

impl Featurizer {
    pub fn new(vocab: Vocabulary, config: FeatureConfig) -> Self {
        Featurizer { vocab, config }
    }

    pub fn input_dims(&self) -> [usize; 3] {
        [2 * GRID_CELLS, self.vocab.len(), self.config.trajectory_width()]
    }

    pub fn point_cloud(&self, part: &PointCloudPart, frame: &PartFrame) -> Arc<[f64]> {
        embed_point_cloud(part, frame).into()
    }

    pub fn language(&self, instruction: &str) -> Arc<[f64]> {
        embed_language(instruction, &self.vocab).as_f64().into()
    }

    /// Encodes a trajectory already expressed in the part frame.
    pub fn trajectory(&self, traj: &Trajectory) -> Result<Arc<[f64]>> {
        Ok(embed_part_trajectory(traj, &self.config)?.into())
    }

    /// Encodes many part-frame trajectories in parallel, keyed by id.
    pub fn trajectories(&self, trajs: &[&Trajectory]) -> Result<HashMap<String, Arc<[f64]>>> {
        trajs
            .par_iter()
            .map(|t| Ok((t.id.clone(), self.trajectory(t)?)))
            .collect()
    }
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked<'a> {
    pub trajectory: &'a Trajectory,
    pub score: f64,
}

/// A trained network together with the featurization it was trained with.
#[derive(Debug, Clone)]
pub struct TransferModel {
    pub net: MultimodalNet,
    pub featurizer: Featurizer,
}

impl TransferModel {
    pub fn new(net: MultimodalNet, featurizer: Featurizer) -> Result<Self> {
        let want = featurizer.input_dims();
        if net.input_dims != want {
            return Err(Error::Checkpoint(format!(
                "network expects inputs {:?} but featurization produces {:?}",
                net.input_dims, want
            )));
        }
        Ok(TransferModel { net, featurizer })
    }

    /// Scores every candidate (part-frame trajectories) for the given part
    /// and instruction and returns them best first. Equal scores are ordered
    /// by trajectory id.
    pub fn infer<'a>(
        &self,
        part: &PointCloudPart,
        frame: &PartFrame,
        instruction: &str,
        candidates: &[&'a Trajectory],
    ) -> Result<Vec<Ranked<'a>>> {
        let pc = self.featurizer.point_cloud(part, frame);
        let lang = self.featurizer.language(instruction);
        let encoded: Vec<Arc<[f64]>> = candidates
            .par_iter()
            .map(|t| self.featurizer.trajectory(t))
            .collect::<Result<_>>()?;
        self.rank_encoded(&pc, &lang, candidates, &encoded)
    }

    /// Like [`TransferModel::infer`] with pre-encoded modalities.
    pub fn rank_encoded<'a>(
        &self,
        pc: &Arc<[f64]>,
        lang: &Arc<[f64]>,
        candidates: &[&'a Trajectory],
        encoded: &[Arc<[f64]>],
    ) -> Result<Vec<Ranked<'a>>> {
        if candidates.is_empty() {
            return Err(Error::EmptyPool);
        }
        let inputs: Vec<FeatureVector> = encoded
            .iter()
            .map(|t| FeatureVector {
                pc: pc.clone(),
                lang: lang.clone(),
                traj: t.clone(),
            })
            .collect();
        let refs: Vec<&FeatureVector> = inputs.iter().collect();
        let scores: Vec<f64> = refs
            .par_chunks(256)
            .map(|chunk| self.net.predict(chunk))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let mut ranked: Vec<Ranked<'a>> = candidates
            .iter()
            .zip(scores)
            .map(|(t, score)| Ranked { trajectory: t, score })
            .collect();
        ranked.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.trajectory.id.cmp(&b.trajectory.id))
        });
        Ok(ranked)
    }
}
