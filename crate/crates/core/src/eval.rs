//! Cross-validated transfer evaluation and baselines.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::dtw::{dtw_mt, DtwParams};
use crate::error::{Error, Result};
use crate::features::{embed_language, voxelize, BagOfWords, OccupancyGrid, StopWords, Vocabulary, FINE_CELL};
use crate::labels::{select_best_demo, TaskInstance};
use crate::net::{NetConfig, TransferModel, Wiring};
use crate::pipeline::{task_vocabulary, train_model, training_pool, Labeling};
use crate::trajectory::Trajectory;

/// Task id to fold index; every manual lies in a single fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, task_id: &str) -> Option<usize> {
        self.assignment.get(task_id).copied()
    }

    /// Uses the folds recorded in the dataset when every task has one.
    pub fn recorded(tasks: &[TaskInstance], folds: usize) -> Option<FoldSplit> {
        let assignment: Option<BTreeMap<String, usize>> = tasks
            .iter()
            .map(|t| t.fold.filter(|&f| f < folds).map(|f| (t.id.clone(), f)))
            .collect();
        assignment.map(|assignment| FoldSplit { folds, assignment })
    }
}

/// Seeded manual-level partition into `folds` folds.
pub fn make_folds(tasks: &[TaskInstance], folds: usize, seed: u64) -> Result<FoldSplit> {
    let mut manuals: Vec<&str> = tasks.iter().map(|t| t.manual_id.as_str()).collect();
    manuals.sort_unstable();
    manuals.dedup();
    if manuals.len() < folds {
        return Err(Error::TooFewManuals {
            needed: folds,
            got: manuals.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    manuals.shuffle(&mut rng);
    let fold_of: BTreeMap<&str, usize> = manuals.iter().enumerate().map(|(i, m)| (*m, i % folds)).collect();
    Ok(FoldSplit {
        folds,
        assignment: tasks
            .iter()
            .map(|t| (t.id.clone(), fold_of[t.manual_id.as_str()]))
            .collect(),
    })
}

/// Picks one pool trajectory for a held-out task.
pub trait Predictor: Sync {
    /// Index into `pool` of the transferred trajectory.
    fn predict(&self, task: &TaskInstance, pool: &[&Trajectory]) -> Result<usize>;
}

/// A transfer method: fitted once per fold on that fold's training tasks.
pub trait Method: Sync {
    fn name(&self) -> String;
    fn fit<'a>(&self, train: &[&'a TaskInstance], pool: &[&'a Trajectory]) -> Result<Box<dyn Predictor + 'a>>;
}

fn keyed_rng(seed: u64, key: &str) -> ChaCha8Rng {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(key.as_bytes())
        .finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

/// Uniform random choice from the training pool, seeded per task.
#[derive(Debug, Clone, Copy)]
pub struct Chance {
    pub seed: u64,
}

impl Chance {
    pub fn pick(&self, key: &str, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::EmptyPool);
        }
        Ok(keyed_rng(self.seed, key).gen_range(0..n))
    }
}

impl Predictor for Chance {
    fn predict(&self, task: &TaskInstance, pool: &[&Trajectory]) -> Result<usize> {
        self.pick(&task.id, pool.len())
    }
}

impl Method for Chance {
    fn name(&self) -> String {
        "chance".into()
    }

    fn fit<'a>(&self, _: &[&'a TaskInstance], _: &[&'a Trajectory]) -> Result<Box<dyn Predictor + 'a>> {
        Ok(Box::new(*self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoChoice {
    Random,
    Weighted,
}

/// Most similar training task by grid overlap and instruction cosine, then
/// one of its demonstrations.
#[derive(Debug, Clone)]
pub struct TaskSimilarity {
    pub choice: DemoChoice,
    pub pc_weight: f64,
    pub seed: u64,
    pub dtw: DtwParams,
    pub stop_words: StopWords,
}

struct Encoded<'a> {
    task: &'a TaskInstance,
    grid: OccupancyGrid,
    words: BagOfWords,
}

pub struct SimilarityPredictor<'a> {
    method: TaskSimilarity,
    vocab: Vocabulary,
    train: Vec<Encoded<'a>>,
}

impl TaskSimilarity {
    pub fn similarity(
        &self,
        a_grid: &OccupancyGrid,
        a_words: &BagOfWords,
        b_grid: &OccupancyGrid,
        b_words: &BagOfWords,
    ) -> f64 {
        self.pc_weight * a_grid.jaccard(b_grid) + (1.0 - self.pc_weight) * a_words.cosine(b_words)
    }
}

impl<'a> SimilarityPredictor<'a> {
    /// Training task most similar to `task`; ties go to the lowest id.
    pub fn nearest(&self, task: &TaskInstance) -> &'a TaskInstance {
        let grid = voxelize(&task.part, &task.frame, FINE_CELL);
        let words = embed_language(&task.instruction, &self.vocab);
        let mut best: Option<(f64, &'a TaskInstance)> = None;
        for e in &self.train {
            let s = self.method.similarity(&grid, &words, &e.grid, &e.words);
            best = match best {
                Some((bs, bt)) if bs > s || (bs == s && bt.id <= e.task.id) => Some((bs, bt)),
                _ => Some((s, e.task)),
            };
        }
        best.expect("fit requires training tasks").1
    }
}

impl Predictor for SimilarityPredictor<'_> {
    fn predict(&self, task: &TaskInstance, pool: &[&Trajectory]) -> Result<usize> {
        let source = self.nearest(task);
        let chosen = match self.method.choice {
            DemoChoice::Random => {
                let k = keyed_rng(self.method.seed, &task.id).gen_range(0..source.demos.len());
                &source.demos[k]
            }
            DemoChoice::Weighted => select_best_demo(source, &self.method.dtw)?,
        };
        pool.iter()
            .position(|t| t.id == chosen.id)
            .ok_or_else(|| Error::Reference(format!("demo {:?} is not in the training pool", chosen.id)))
    }
}

impl Method for TaskSimilarity {
    fn name(&self) -> String {
        match self.choice {
            DemoChoice::Random => "similarity+random".into(),
            DemoChoice::Weighted => "similarity+weighted".into(),
        }
    }

    fn fit<'a>(&self, train: &[&'a TaskInstance], _: &[&'a Trajectory]) -> Result<Box<dyn Predictor + 'a>> {
        if train.is_empty() {
            return Err(Error::NoData);
        }
        let vocab = task_vocabulary(train, &self.stop_words)?;
        let encoded = train
            .par_iter()
            .map(|t| Encoded {
                task: t,
                grid: voxelize(&t.part, &t.frame, FINE_CELL),
                words: embed_language(&t.instruction, &vocab),
            })
            .collect();
        Ok(Box::new(SimilarityPredictor {
            method: self.clone(),
            vocab,
            train: encoded,
        }))
    }
}

/// The learned ranker, trained from scratch on each fold.
#[derive(Debug, Clone)]
pub struct LearnedRanker {
    pub label: String,
    pub config: Config,
    pub labeling: Labeling,
    pub stop_words: StopWords,
}

pub struct ModelPredictor {
    model: TransferModel,
}

impl Predictor for ModelPredictor {
    fn predict(&self, task: &TaskInstance, pool: &[&Trajectory]) -> Result<usize> {
        let ranked = self.model.infer(&task.part, &task.frame, &task.instruction, pool)?;
        let top = ranked[0].trajectory;
        Ok(pool
            .iter()
            .position(|t| std::ptr::eq(*t, top))
            .expect("ranked candidates come from the pool"))
    }
}

impl Method for LearnedRanker {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn fit<'a>(&self, train: &[&'a TaskInstance], _: &[&'a Trajectory]) -> Result<Box<dyn Predictor + 'a>> {
        let (model, _) = train_model(train, &self.config, self.labeling, &self.stop_words)?;
        Ok(Box::new(ModelPredictor { model }))
    }
}

/// The standard comparison set.
pub fn standard_methods(config: &Config, stop_words: &StopWords) -> Vec<Box<dyn Method>> {
    let similarity = |choice| TaskSimilarity {
        choice,
        pc_weight: config.eval.similarity_pc_weight,
        seed: config.eval.seed,
        dtw: config.dtw,
        stop_words: stop_words.clone(),
    };
    let ranker = |label: &str, labeling, wiring| {
        let mut c = config.clone();
        c.net = NetConfig { wiring, ..c.net };
        LearnedRanker {
            label: label.into(),
            config: c,
            labeling,
            stop_words: stop_words.clone(),
        }
    };
    vec![
        Box::new(Chance { seed: config.eval.seed }),
        Box::new(similarity(DemoChoice::Random)),
        Box::new(similarity(DemoChoice::Weighted)),
        Box::new(ranker("model", Labeling::NoiseHandled, Wiring::Multimodal)),
        Box::new(ranker(
            "model-no-noise-handling",
            Labeling::Trusting,
            Wiring::Multimodal,
        )),
        Box::new(ranker("model-flat", Labeling::NoiseHandled, Wiring::Flat)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub task: String,
    pub manual: String,
    pub fold: usize,
    pub predicted: String,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Standard deviation of the per-fold means.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub per_manual: Stat,
    pub per_instruction: Stat,
    /// Percentage of instructions transferred below the threshold.
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub instructions: usize,
    pub manuals: usize,
    pub items: Vec<ItemResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Test tasks without an expert demonstration; not scored.
    pub skipped: Vec<String>,
    pub methods: Vec<MethodReport>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.len() < 2 {
        return 0.0;
    }
    let m = mean(&finite);
    (finite.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (finite.len() - 1) as f64).sqrt()
}

/// Per-instruction mean, per-manual mean (instructions averaged within a
/// manual first) and accuracy, summed in manual order so a dataset with one
/// instruction per manual gives identical means.
pub fn summarize(items: &[&ItemResult], threshold: f64) -> (f64, f64, f64, usize) {
    let mut by_manual: BTreeMap<&str, Vec<&ItemResult>> = BTreeMap::new();
    for it in items {
        by_manual.entry(&it.manual).or_default().push(it);
    }
    for v in by_manual.values_mut() {
        v.sort_by(|a, b| a.task.cmp(&b.task));
    }
    let mut total = 0.0;
    let mut manual_total = 0.0;
    let mut hits = 0usize;
    let mut n = 0usize;
    for v in by_manual.values() {
        let mut s = 0.0;
        for it in v {
            total += it.distance;
            s += it.distance;
            if it.distance < threshold {
                hits += 1;
            }
            n += 1;
        }
        manual_total += s / v.len() as f64;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN, 0);
    }
    (
        total / n as f64,
        manual_total / by_manual.len() as f64,
        100.0 * hits as f64 / n as f64,
        by_manual.len(),
    )
}

fn method_report(name: String, mut items: Vec<ItemResult>, folds: usize, threshold: f64) -> MethodReport {
    items.sort_by(|a, b| a.fold.cmp(&b.fold).then_with(|| a.task.cmp(&b.task)));
    let all: Vec<&ItemResult> = items.iter().collect();
    let (per_instruction, per_manual, accuracy, manuals) = summarize(&all, threshold);
    let mut fold_ins = Vec::new();
    let mut fold_man = Vec::new();
    let mut fold_acc = Vec::new();
    for f in 0..folds {
        let sub: Vec<&ItemResult> = items.iter().filter(|i| i.fold == f).collect();
        if sub.is_empty() {
            continue;
        }
        let (i, m, a, _) = summarize(&sub, threshold);
        fold_ins.push(i);
        fold_man.push(m);
        fold_acc.push(a);
    }
    MethodReport {
        method: name,
        per_manual: Stat {
            mean: per_manual,
            std: std_dev(&fold_man),
        },
        per_instruction: Stat {
            mean: per_instruction,
            std: std_dev(&fold_ins),
        },
        accuracy,
        accuracy_std: std_dev(&fold_acc),
        instructions: items.len(),
        manuals,
        items,
    }
}

/// Cross-validates every method: for each fold, methods are fitted on the
/// other folds, pick one training-pool trajectory per held-out instruction,
/// and are scored by distance to the expert demonstration.
pub fn evaluate(
    tasks: &[TaskInstance],
    split: &FoldSplit,
    methods: &[Box<dyn Method>],
    params: &DtwParams,
    threshold: f64,
    seed: u64,
) -> Result<EvalReport> {
    params.validate()?;
    let mut skipped = Vec::new();
    for t in tasks {
        if split.fold_of(&t.id).is_none() {
            return Err(Error::Reference(format!("task {:?} has no fold", t.id)));
        }
        if t.expert_demo.is_none() {
            warn!("task {:?} has no expert demonstration; skipped", t.id);
            skipped.push(t.id.clone());
        }
    }

    let per_fold: Vec<Vec<Vec<ItemResult>>> = (0..split.folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<&TaskInstance> = tasks.iter().filter(|t| split.fold_of(&t.id) != Some(f)).collect();
            let test: Vec<&TaskInstance> = tasks
                .iter()
                .filter(|t| split.fold_of(&t.id) == Some(f) && t.expert_demo.is_some())
                .collect();
            if test.is_empty() || train.is_empty() {
                return Ok(vec![Vec::new(); methods.len()]);
            }
            let pool = training_pool(&train);
            methods
                .iter()
                .map(|m| {
                    let predictor = m.fit(&train, &pool)?;
                    test.iter()
                        .map(|t| {
                            let i = predictor.predict(t, &pool)?;
                            let expert = t.expert_demo.as_ref().expect("filtered");
                            Ok(ItemResult {
                                task: t.id.clone(),
                                manual: t.manual_id.clone(),
                                fold: f,
                                predicted: pool[i].id.clone(),
                                distance: dtw_mt(pool[i], expert, params)?.distance,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let methods = methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let items = per_fold.iter().flat_map(|f| f[k].iter().cloned()).collect();
            method_report(m.name(), items, split.folds, threshold)
        })
        .collect();
    Ok(EvalReport {
        folds: split.folds,
        seed,
        threshold,
        skipped,
        methods,
    })
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}-fold cross-validation, threshold {}, seed {}",
            self.folds, self.threshold, self.seed
        );
        let _ = writeln!(
            out,
            "{:<26} {:>18} {:>18} {:>14}",
            "method", "per manual", "per instruction", "accuracy (%)"
        );
        for m in &self.methods {
            let _ = writeln!(
                out,
                "{:<26} {:>18} {:>18} {:>14}",
                m.method,
                format!("{:.2} ± {:.2}", m.per_manual.mean, m.per_manual.std),
                format!("{:.2} ± {:.2}", m.per_instruction.mean, m.per_instruction.std),
                format!("{:.1} ± {:.1}", m.accuracy, m.accuracy_std),
            );
        }
        if !self.skipped.is_empty() {
            let _ = writeln!(out, "skipped (no expert demo): {}", self.skipped.join(", "));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,per_manual_mean,per_manual_std,per_instruction_mean,per_instruction_std,accuracy,accuracy_std,instructions,manuals\n",
        );
        for m in &self.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                m.method,
                m.per_manual.mean,
                m.per_manual.std,
                m.per_instruction.mean,
                m.per_instruction.std,
                m.accuracy,
                m.accuracy_std,
                m.instructions,
                m.manuals
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
