//! Training pipeline: vocabulary, labels, featurization, pretraining and
//! fine-tuning for a set of training tasks.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{build_vocabulary, FeatureVector, StopWords, Vocabulary};
use crate::labels::{generate_examples, generate_examples_trusting, LabeledExample, TaskInstance};
use crate::net::{finetune, pretrain, Featurizer, FinetuneLog, PretrainLog, TransferModel};
use crate::trajectory::Trajectory;

/// How training labels are derived from crowd demonstrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Labeling {
    /// Best-candidate selection plus distance thresholds.
    #[default]
    NoiseHandled,
    /// Every crowd demonstration is taken at face value.
    Trusting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub tasks: usize,
    pub pool: usize,
    pub positives: usize,
    pub negatives: usize,
    pub vocab_size: usize,
    pub pretrain: PretrainLog,
    pub finetune: FinetuneLog,
}

/// Distinct crowd demonstrations of `tasks`, sorted by id.
pub fn training_pool<'a>(tasks: &[&'a TaskInstance]) -> Vec<&'a Trajectory> {
    let mut map: BTreeMap<&str, &Trajectory> = BTreeMap::new();
    for t in tasks {
        for d in &t.demos {
            map.entry(d.id.as_str()).or_insert(d);
        }
    }
    map.into_values().collect()
}

/// Vocabulary over the instructions of `tasks`.
pub fn task_vocabulary(tasks: &[&TaskInstance], stop_words: &StopWords) -> Result<Vocabulary> {
    let corpus: Vec<&str> = tasks.iter().map(|t| t.instruction.as_str()).collect();
    build_vocabulary(&corpus, stop_words)
}

pub fn label(
    tasks: &[&TaskInstance],
    pool: &[&Trajectory],
    config: &Config,
    labeling: Labeling,
) -> Result<Vec<LabeledExample>> {
    match labeling {
        Labeling::NoiseHandled => generate_examples(tasks, pool, &config.labels, &config.dtw),
        Labeling::Trusting => Ok(generate_examples_trusting(tasks, pool, config.labels.negative_ratio)),
    }
}

type SharedModalities = (Arc<[f64]>, Arc<[f64]>);

/// Feature vectors for labeled examples. Each task's point cloud and
/// instruction and each trajectory is encoded once and shared.
pub fn featurize_examples(
    featurizer: &Featurizer,
    tasks: &[&TaskInstance],
    pool: &[&Trajectory],
    examples: &[LabeledExample],
) -> Result<Vec<(FeatureVector, u8)>> {
    let by_id: HashMap<&str, &TaskInstance> = tasks.iter().map(|t| (t.id.as_str(), *t)).collect();
    let trajs = featurizer.trajectories(pool)?;
    let mut modal: HashMap<&str, SharedModalities> = HashMap::new();
    examples
        .iter()
        .map(|e| {
            let task = by_id
                .get(e.task_ref.as_str())
                .ok_or_else(|| Error::Reference(format!("example refers to unknown task {:?}", e.task_ref)))?;
            let (pc, lang) = modal
                .entry(task.id.as_str())
                .or_insert_with(|| {
                    (
                        featurizer.point_cloud(&task.part, &task.frame),
                        featurizer.language(&task.instruction),
                    )
                })
                .clone();
            let traj = trajs
                .get(e.traj_ref.as_str())
                .ok_or_else(|| Error::Reference(format!("example refers to unknown trajectory {:?}", e.traj_ref)))?
                .clone();
            Ok((FeatureVector { pc, lang, traj }, e.label))
        })
        .collect()
}

/// Trains a model on `tasks`, with the pool of their distinct demos as
/// label candidates.
pub fn train_model(
    tasks: &[&TaskInstance],
    config: &Config,
    labeling: Labeling,
    stop_words: &StopWords,
) -> Result<(TransferModel, TrainLog)> {
    config.validate()?;
    if tasks.is_empty() {
        return Err(Error::NoData);
    }
    let pool = training_pool(tasks);
    let vocab = task_vocabulary(tasks, stop_words)?;
    let featurizer = Featurizer::new(vocab, config.features);
    let examples = label(tasks, &pool, config, labeling)?;
    let data = featurize_examples(&featurizer, tasks, &pool, &examples)?;
    let positives = data.iter().filter(|(_, y)| *y == 1).count();
    info!(
        "training on {} tasks, {} pool trajectories, {} examples ({} positive)",
        tasks.len(),
        pool.len(),
        data.len(),
        positives
    );
    let inputs: Vec<FeatureVector> = data.iter().map(|(x, _)| x.clone()).collect();
    let (net, pretrain_log) = pretrain(&inputs, &config.net)?;
    let (net, finetune_log) = finetune(net, &data, &config.net)?;
    let log = TrainLog {
        tasks: tasks.len(),
        pool: pool.len(),
        positives,
        negatives: data.len() - positives,
        vocab_size: featurizer.vocab.len(),
        pretrain: pretrain_log,
        finetune: finetune_log,
    };
    Ok((TransferModel::new(net, featurizer)?, log))
}
