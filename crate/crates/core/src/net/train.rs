//! Layer-wise sparse denoising autoencoder pretraining and dropout
//! fine-tuning on the negative log-likelihood.

use std::collections::HashMap;

use log::{info, warn};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NetConfig;
use super::model::{accumulate_outer, matmul, relu, sigmoid, Block, DropoutMode, Grads, MultimodalNet};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Slack allowed when re-checking the max-norm bound after a projection.
const MAX_NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPretrainLog {
    pub level: usize,
    pub block: usize,
    /// Distinct input rows the autoencoder was trained on.
    pub samples: usize,
    /// Denoising reconstruction error (squared-error sum per sample of the
    /// clean input reconstructed from a fixed corruption of it) before
    /// training.
    pub initial_loss: f64,
    /// Denoising reconstruction error after each epoch, on the same fixed
    /// corruption.
    pub losses: Vec<f64>,
    /// Reconstruction error of uncorrupted inputs after training.
    pub clean_loss: f64,
    /// Mean hidden activation on clean inputs after training.
    pub mean_activation: f64,
    /// Largest unit norm observed after any update.
    pub max_unit_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub blocks: Vec<BlockPretrainLog>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneLog {
    /// Mean NLL over the training set (dropout off) after each epoch.
    pub epoch_nll: Vec<f64>,
    /// Largest unit norm observed after any update.
    pub max_unit_norm: f64,
    pub updates: usize,
    pub single_class: bool,
}

fn ptr_key(x: &[f64]) -> usize {
    x.as_ptr() as usize
}

/// Distinct rows of `data` for the given modality subset, in first-seen
/// order. Identity is by shared allocation, which is how featurization
/// shares one point cloud or trajectory between examples.
fn distinct<'a>(data: &'a [FeatureVector], modalities: &[usize]) -> Vec<&'a FeatureVector> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for x in data {
        let parts = [ptr_key(&x.pc), ptr_key(&x.lang), ptr_key(&x.traj)];
        let key: Vec<usize> = modalities.iter().map(|&m| parts[m]).collect();
        if seen.insert(key, ()).is_none() {
            out.push(x);
        }
    }
    out
}

/// Builds and pretrains a network bottom-up: each block is trained as a tied
/// autoencoder on the clean encodings produced by the levels below it.
pub fn pretrain(data: &[FeatureVector], config: &NetConfig) -> Result<(MultimodalNet, PretrainLog)> {
    config.validate()?;
    let first = data.first().ok_or(Error::NoData)?;
    let (a, b, c) = first.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut net = MultimodalNet::new(config.clone(), [a, b, c], &mut rng)?;
    for x in data {
        net.check_input(x)?;
    }
    let mut log = PretrainLog::default();

    for level in 0..net.levels.len() {
        for k in 0..net.levels[level].len() {
            let inputs = net.levels[level][k].inputs.clone();
            let x = if level == 0 {
                let rows = distinct(data, &inputs);
                let segs = net.input_segments(&rows)?;
                concat(&segs, &inputs)
            } else {
                let rows = distinct(data, &[0, 1, 2]);
                let segs = net.encode(net.input_segments(&rows)?, level);
                concat(&segs[level], &inputs)
            };
            let block_log = train_autoencoder(&mut net.levels[level][k], &x, config, &mut rng, level, k)?;
            info!(
                "pretrained level {} block {}: loss {:.4} -> {:.4} over {} samples",
                level + 1,
                k,
                block_log.initial_loss,
                block_log.losses.last().copied().unwrap_or(f64::NAN),
                block_log.samples
            );
            if block_log.mean_activation == 0.0 {
                warn!(
                    "level {} block {k}: every unit is inactive after pretraining",
                    level + 1
                );
            }
            log.blocks.push(block_log);
        }
    }
    Ok((net, log))
}

fn concat(segments: &[Array2<f64>], inputs: &[usize]) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = inputs.iter().map(|&i| segments[i].view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("matching batch sizes")
}

struct AeEval {
    recon: f64,
    mean_activation: f64,
}

/// Reconstruction of `x` from `input` (either `x` or a corruption of it).
fn ae_evaluate(block: &Block, decoder_bias: &Array1<f64>, x: &Array2<f64>, input: &Array2<f64>) -> AeEval {
    let h = relu(matmul(&input.view(), &block.weight) + &block.bias);
    let x_hat = relu(h.dot(&block.weight.t()) + decoder_bias);
    let n = x.nrows() as f64;
    AeEval {
        recon: (&x_hat - x).mapv(|v| v * v).sum() / n,
        mean_activation: h.mean().unwrap_or(0.0),
    }
}

pub(crate) struct AeGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub decoder_bias: Array1<f64>,
}

/// Denoising objective `(1/B)·Σ(‖x̂ − x‖² + λ‖h‖₁)` with tied weights, where
/// `h = relu(x̃·W + b)` and `x̂ = relu(h·Wᵀ + b′)`, and its gradient.
pub(crate) fn ae_gradients(
    block: &Block,
    decoder_bias: &Array1<f64>,
    clean: &Array2<f64>,
    noisy: &Array2<f64>,
    lambda: f64,
) -> (f64, AeGrads) {
    let bsz = clean.nrows() as f64;
    let z = matmul(&noisy.view(), &block.weight) + &block.bias;
    let h = relu(z.clone());
    let z_hat = h.dot(&block.weight.t()) + decoder_bias;
    let x_hat = relu(z_hat.clone());
    let residual = &x_hat - clean;
    let loss = (residual.mapv(|v| v * v).sum() + lambda * h.sum()) / bsz;

    let d_zhat = residual * (2.0 / bsz) * &z_hat.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    // the decoder uses Wᵀ, so its gradient lands transposed on W
    let mut weight = d_zhat.t().dot(&h);
    let decoder_bias = d_zhat.sum_axis(Axis(0));
    let d_h = d_zhat.dot(&block.weight) + lambda / bsz;
    let d_z = d_h * &z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    accumulate_outer(&mut weight, &noisy.view(), &d_z);
    let bias = d_z.sum_axis(Axis(0));
    (
        loss,
        AeGrads {
            weight,
            bias,
            decoder_bias,
        },
    )
}

/// Seed offset for the fixed evaluation corruption, kept apart from the
/// training stream.
const EVAL_STREAM: u64 = 0x5851_f42d_4c95_7f2d;

/// Zeroes each entry independently with probability `1 - keep`.
fn corrupt(x: &Array2<f64>, keep: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    if keep < 1.0 {
        x.mapv(|v| if rng.gen::<f64>() < keep { v } else { 0.0 })
    } else {
        x.clone()
    }
}

fn train_autoencoder(
    block: &mut Block,
    x: &Array2<f64>,
    config: &NetConfig,
    rng: &mut ChaCha8Rng,
    level: usize,
    index: usize,
) -> Result<BlockPretrainLog> {
    let keep = 1.0 - config.corruption_p;
    let lambda = config.sparsity_lambda;
    let c = config.maxnorm_c;
    let mut decoder_bias = Array1::<f64>::zeros(block.fan_in());
    let mut v_w = Array2::<f64>::zeros(block.weight.raw_dim());
    let mut v_b = Array1::<f64>::zeros(block.bias.raw_dim());
    let mut v_db = Array1::<f64>::zeros(decoder_bias.raw_dim());

    let mut max_norm = block.project_max_norm(c);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ EVAL_STREAM ^ ((level as u64) << 32 | index as u64));
    let eval_input = corrupt(x, keep, &mut eval_rng);
    let initial_loss = ae_evaluate(block, &decoder_bias, x, &eval_input).recon;
    let mut losses = Vec::with_capacity(config.epochs_pretrain);
    let mut order: Vec<usize> = (0..x.nrows()).collect();

    for epoch in 0..config.epochs_pretrain {
        let lr = config.pretrain_learning_rate / (1.0 + config.lr_decay * epoch as f64);
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            let clean = x.select(Axis(0), chunk);
            let noisy = corrupt(&clean, keep, rng);
            let (_, g) = ae_gradients(block, &decoder_bias, &clean, &noisy, lambda);

            momentum_step(&mut block.weight, &mut v_w, &g.weight, lr, config.momentum);
            momentum_step(&mut block.bias, &mut v_b, &g.bias, lr, config.momentum);
            momentum_step(&mut decoder_bias, &mut v_db, &g.decoder_bias, lr, config.momentum);

            let after = block.project_max_norm(c);
            assert!(
                after <= c + MAX_NORM_SLACK,
                "max-norm violated after pretraining update"
            );
            max_norm = max_norm.max(after);
        }
        let eval = ae_evaluate(block, &decoder_bias, x, &eval_input);
        if !eval.recon.is_finite() {
            return Err(Error::Divergence {
                stage: format!("pretraining level {} block {index}", level + 1),
                epoch,
            });
        }
        losses.push(eval.recon);
    }
    let clean = ae_evaluate(block, &decoder_bias, x, x);
    Ok(BlockPretrainLog {
        level,
        block: index,
        samples: x.nrows(),
        initial_loss,
        losses,
        mean_activation: clean.mean_activation,
        clean_loss: clean.recon,
        max_unit_norm: max_norm,
    })
}

fn momentum_step<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    velocity: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    lr: f64,
    momentum: f64,
) {
    velocity.zip_mut_with(grad, |v, &g| *v = momentum * *v - lr * g);
    *param += &*velocity;
}

/// Fine-tunes `net` on labeled examples with mini-batch SGD on the mean
/// negative log-likelihood. Dropout masks are drawn for every hidden layer
/// during training only; every unit is projected back onto the max-norm ball
/// after each update.
pub fn finetune(
    mut net: MultimodalNet,
    examples: &[(FeatureVector, u8)],
    config: &NetConfig,
) -> Result<(MultimodalNet, FinetuneLog)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::NoData);
    }
    for (x, _) in examples {
        net.check_input(x)?;
    }
    net.config = config.clone();
    let positives = examples.iter().filter(|(_, y)| *y == 1).count();
    let single_class = positives == 0 || positives == examples.len();
    if single_class {
        warn!(
            "fine-tuning data contains a single class ({positives} positives of {}); training anyway",
            examples.len()
        );
    }

    // offset the stream so fine-tuning does not replay pretraining draws
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut velocity = Grads::zeros_like(&net);
    let mut log = FinetuneLog {
        single_class,
        max_unit_norm: net.project_max_norm(),
        ..FinetuneLog::default()
    };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let all: Vec<(&FeatureVector, f64)> = examples.iter().map(|(x, y)| (x, f64::from(*y))).collect();

    for epoch in 0..config.epochs_finetune {
        let lr = config.learning_rate / (1.0 + config.lr_decay * epoch as f64);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<&FeatureVector> = chunk.iter().map(|&i| &examples[i].0).collect();
            let inputs = net.input_segments(&xs)?;
            let mode = if config.dropout_rate > 0.0 {
                DropoutMode::Sample(&mut rng)
            } else {
                DropoutMode::Off
            };
            let cache = net.forward_batch(inputs, mode);
            let n = chunk.len() as f64;
            let d = Array1::from_iter(
                cache
                    .logits
                    .iter()
                    .zip(chunk)
                    .map(|(&z, &i)| (sigmoid(z) - f64::from(examples[i].1)) / n),
            );
            let grads = net.backward(&cache, &d);
            apply_update(&mut net, &mut velocity, &grads, lr, config.momentum);
            let after = net.project_max_norm();
            assert!(
                after <= config.maxnorm_c + MAX_NORM_SLACK,
                "max-norm violated after fine-tuning update"
            );
            log.max_unit_norm = log.max_unit_norm.max(after);
            log.updates += 1;
        }
        let nll = mean_nll(&net, &all)?;
        if !nll.is_finite() || !net.params_finite() {
            return Err(Error::Divergence {
                stage: "fine-tuning".into(),
                epoch,
            });
        }
        log.epoch_nll.push(nll);
    }
    Ok((net, log))
}

fn mean_nll(net: &MultimodalNet, all: &[(&FeatureVector, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in all.chunks(512) {
        total += net.nll(chunk)? * chunk.len() as f64;
    }
    Ok(total / all.len() as f64)
}

fn apply_update(net: &mut MultimodalNet, velocity: &mut Grads, grads: &Grads, lr: f64, momentum: f64) {
    let blocks = net.levels.iter_mut().flatten().chain(std::iter::once(&mut net.output));
    let vels = velocity
        .levels
        .iter_mut()
        .flatten()
        .chain(std::iter::once(&mut velocity.output));
    let gs = grads.levels.iter().flatten().chain(std::iter::once(&grads.output));
    for ((block, (vw, vb)), (gw, gb)) in blocks.zip(vels).zip(gs) {
        momentum_step(&mut block.weight, vw, gw, lr, momentum);
        momentum_step(&mut block.bias, vb, gb, lr, momentum);
    }
}
