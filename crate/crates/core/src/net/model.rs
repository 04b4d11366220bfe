//! Block-wired feed-forward network with ReLU hidden layers and a logistic
//! output unit.
//!
//! Weights are stored `inputs × outputs`, so a layer computes
//! `h = relu(x·W + b)` on row-major batches. The incoming weights of a unit
//! are one column of `W`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NetConfig;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Inputs with fewer non-zeros than this fraction use the sparse product.
const SPARSE_DENSITY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// Segments of the previous level feeding this block, in order.
    pub inputs: Vec<usize>,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Block {
    pub(crate) fn new(inputs: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Block {
        let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Block {
            inputs,
            weight: Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-r..r)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    /// Scales every unit's incoming weight vector down to norm `c` when it
    /// exceeds it. Returns the largest norm after projection.
    pub fn project_max_norm(&mut self, c: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for mut col in self.weight.columns_mut() {
            let n = col.dot(&col).sqrt();
            if n > c {
                col *= c / n;
                worst = worst.max(c);
            } else {
                worst = worst.max(n);
            }
        }
        worst
    }

    pub fn max_unit_norm(&self) -> f64 {
        self.weight
            .columns()
            .into_iter()
            .map(|c| c.dot(&c).sqrt())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalNet {
    pub config: NetConfig,
    /// Widths of the point-cloud, language and trajectory inputs.
    pub input_dims: [usize; 3],
    pub levels: Vec<Vec<Block>>,
    pub output: Block,
}

/// Gradients laid out like the network's parameters.
#[derive(Debug, Clone)]
pub struct Grads {
    pub levels: Vec<Vec<(Array2<f64>, Array1<f64>)>>,
    pub output: (Array2<f64>, Array1<f64>),
}

impl Grads {
    pub fn zeros_like(net: &MultimodalNet) -> Grads {
        let z = |b: &Block| (Array2::zeros(b.weight.raw_dim()), Array1::zeros(b.bias.raw_dim()));
        Grads {
            levels: net.levels.iter().map(|l| l.iter().map(z).collect()).collect(),
            output: z(&net.output),
        }
    }

    /// Flattened in [`MultimodalNet::visit_params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.levels.iter().flatten().chain(std::iter::once(&self.output)) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

/// Per-block intermediate values kept for backpropagation.
struct BlockCache {
    input: Array2<f64>,
    /// relu'(z) times the dropout mask (or the keep scale at inference).
    gate: Array2<f64>,
}

pub(crate) struct ForwardCache {
    levels: Vec<Vec<BlockCache>>,
    output_input: Array2<f64>,
    pub(crate) logits: Array1<f64>,
}

/// How hidden activations are treated in a forward pass.
pub(crate) enum DropoutMode<'a> {
    /// No dropout and no rescaling.
    Off,
    /// Inference with weight scaling: activations multiplied by `1 − p`.
    Scaled,
    /// Training: fresh Bernoulli masks drawn from the rng.
    Sample(&'a mut ChaCha8Rng),
}

pub(crate) fn density(x: &ArrayView2<f64>) -> f64 {
    if x.is_empty() {
        return 1.0;
    }
    x.iter().filter(|&&v| v != 0.0).count() as f64 / x.len() as f64
}

/// `x·w`, skipping zero entries of `x` when it is sparse.
pub(crate) fn matmul(x: &ArrayView2<f64>, w: &Array2<f64>) -> Array2<f64> {
    if density(x) >= SPARSE_DENSITY {
        return x.dot(w);
    }
    let mut out = Array2::zeros((x.nrows(), w.ncols()));
    for (xr, mut orow) in x.rows().into_iter().zip(out.rows_mut()) {
        for (i, &v) in xr.iter().enumerate() {
            if v != 0.0 {
                orow.scaled_add(v, &w.row(i));
            }
        }
    }
    out
}

/// `xᵀ·d` accumulated into `acc`, skipping zero entries of `x` when sparse.
pub(crate) fn accumulate_outer(acc: &mut Array2<f64>, x: &ArrayView2<f64>, d: &Array2<f64>) {
    if density(x) >= SPARSE_DENSITY {
        *acc += &x.t().dot(d);
        return;
    }
    for (xr, dr) in x.rows().into_iter().zip(d.rows()) {
        for (i, &v) in xr.iter().enumerate() {
            if v != 0.0 {
                acc.row_mut(i).scaled_add(v, &dr);
            }
        }
    }
}

fn concat_inputs(segments: &[Array2<f64>], inputs: &[usize]) -> Array2<f64> {
    if inputs.len() == 1 {
        return segments[inputs[0]].clone();
    }
    let views: Vec<ArrayView2<f64>> = inputs.iter().map(|&i| segments[i].view()).collect();
    concatenate(Axis(1), &views).expect("segments share the batch dimension")
}

pub(crate) fn relu(z: Array2<f64>) -> Array2<f64> {
    z.mapv_into(|v| v.max(0.0))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `−log P(y | z)` for a logistic unit with logit `z`.
pub fn logistic_nll(z: f64, y: f64) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    softplus - y * z
}

impl MultimodalNet {
    /// Randomly initialized network for inputs of the given widths.
    pub fn new(config: NetConfig, input_dims: [usize; 3], rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        if input_dims.contains(&0) {
            return Err(Error::invalid(
                "input_dims",
                "every modality needs at least one feature",
            ));
        }
        let mut widths: Vec<usize> = input_dims.to_vec();
        let mut levels = Vec::new();
        for level in config.layout() {
            let mut blocks = Vec::new();
            let mut next = Vec::new();
            for (inputs, width) in level {
                let fan_in = inputs.iter().map(|&i| widths[i]).sum();
                blocks.push(Block::new(inputs, fan_in, width, rng));
                next.push(width);
            }
            levels.push(blocks);
            widths = next;
        }
        let top: Vec<usize> = (0..widths.len()).collect();
        let output = Block::new(top, widths.iter().sum(), 1, rng);
        Ok(MultimodalNet {
            config,
            input_dims,
            levels,
            output,
        })
    }

    pub fn check_input(&self, x: &FeatureVector) -> Result<()> {
        let got = x.dims();
        let names = ["point cloud", "language", "trajectory"];
        for (k, (&want, have)) in self.input_dims.iter().zip([got.0, got.1, got.2]).enumerate() {
            if want != have {
                return Err(Error::Shape {
                    context: format!("{} features", names[k]),
                    expected: want,
                    got: have,
                });
            }
        }
        Ok(())
    }

    /// Stacks a batch into the three level-0 segments.
    pub(crate) fn input_segments(&self, batch: &[&FeatureVector]) -> Result<Vec<Array2<f64>>> {
        for x in batch {
            self.check_input(x)?;
        }
        let stack = |dim: usize, pick: fn(&FeatureVector) -> &[f64]| {
            let mut m = Array2::zeros((batch.len(), dim));
            for (mut row, x) in m.rows_mut().into_iter().zip(batch) {
                row.assign(&ndarray::ArrayView1::from(pick(x)));
            }
            m
        };
        Ok(vec![
            stack(self.input_dims[0], |x| &x.pc),
            stack(self.input_dims[1], |x| &x.lang),
            stack(self.input_dims[2], |x| &x.traj),
        ])
    }

    /// Hidden activations of every level for a batch, without dropout
    /// masks. `upto` limits how many levels are computed.
    pub(crate) fn encode(&self, inputs: Vec<Array2<f64>>, upto: usize) -> Vec<Vec<Array2<f64>>> {
        let mut all = vec![inputs];
        for level in self.levels.iter().take(upto) {
            let prev = all.last().expect("level 0 present");
            let next = level
                .iter()
                .map(|b| {
                    let x = concat_inputs(prev, &b.inputs);
                    relu(matmul(&x.view(), &b.weight) + &b.bias)
                })
                .collect();
            all.push(next);
        }
        all
    }

    pub(crate) fn forward_batch(&self, inputs: Vec<Array2<f64>>, mut mode: DropoutMode<'_>) -> ForwardCache {
        let keep = 1.0 - self.config.dropout_rate;
        let mut segments = inputs;
        let mut caches = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let mut next = Vec::with_capacity(level.len());
            let mut level_cache = Vec::with_capacity(level.len());
            for b in level {
                let x = concat_inputs(&segments, &b.inputs);
                let z = matmul(&x.view(), &b.weight) + &b.bias;
                let gate = match &mut mode {
                    DropoutMode::Off => z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                    DropoutMode::Scaled => z.mapv(|v| if v > 0.0 { keep } else { 0.0 }),
                    DropoutMode::Sample(rng) => z.mapv(|v| {
                        let kept = rng.gen::<f64>() < keep;
                        if v > 0.0 && kept {
                            1.0
                        } else {
                            0.0
                        }
                    }),
                };
                let h = &z * &gate;
                next.push(h);
                level_cache.push(BlockCache { input: x, gate });
            }
            caches.push(level_cache);
            segments = next;
        }
        let x = concat_inputs(&segments, &self.output.inputs);
        let logits = matmul(&x.view(), &self.output.weight).column(0).to_owned() + self.output.bias[0];
        ForwardCache {
            levels: caches,
            output_input: x,
            logits,
        }
    }

    /// Backpropagates `d_logits` (∂loss/∂logit per sample) and returns the
    /// parameter gradients.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_logits: &Array1<f64>) -> Grads {
        let mut grads = Grads::zeros_like(self);
        let d_out = d_logits.view().insert_axis(Axis(1)).to_owned();
        accumulate_outer(&mut grads.output.0, &cache.output_input.view(), &d_out);
        grads.output.1 += &d_out.sum_axis(Axis(0));

        let mut d_segments = split_columns(
            &d_out.dot(&self.output.weight.t()),
            &self.output.inputs,
            &self
                .levels
                .last()
                .expect("three levels")
                .iter()
                .map(Block::fan_out)
                .collect::<Vec<_>>(),
        );

        for l in (0..self.levels.len()).rev() {
            let prev_widths: Vec<usize> = if l == 0 {
                self.input_dims.to_vec()
            } else {
                self.levels[l - 1].iter().map(Block::fan_out).collect()
            };
            let mut d_prev: Vec<Option<Array2<f64>>> = vec![None; prev_widths.len()];
            for (k, block) in self.levels[l].iter().enumerate() {
                let bc = &cache.levels[l][k];
                let Some(d_h) = d_segments[k].take() else {
                    continue;
                };
                let d_z = d_h * &bc.gate;
                accumulate_outer(&mut grads.levels[l][k].0, &bc.input.view(), &d_z);
                grads.levels[l][k].1 += &d_z.sum_axis(Axis(0));
                if l > 0 {
                    let d_x = d_z.dot(&block.weight.t());
                    let parts = split_columns(&d_x, &block.inputs, &prev_widths);
                    for (slot, part) in d_prev.iter_mut().zip(parts) {
                        if let Some(p) = part {
                            match slot {
                                Some(acc) => *acc += &p,
                                None => *slot = Some(p),
                            }
                        }
                    }
                }
            }
            d_segments = d_prev;
        }
        grads
    }

    /// Mean negative log-likelihood of `batch` with dropout disabled.
    pub fn nll(&self, batch: &[(&FeatureVector, f64)]) -> Result<f64> {
        let xs: Vec<&FeatureVector> = batch.iter().map(|(x, _)| *x).collect();
        let cache = self.forward_batch(self.input_segments(&xs)?, DropoutMode::Off);
        let n = batch.len() as f64;
        Ok(cache
            .logits
            .iter()
            .zip(batch)
            .map(|(&z, (_, y))| logistic_nll(z, *y))
            .sum::<f64>()
            / n)
    }

    /// Analytic gradient of [`MultimodalNet::nll`].
    pub fn nll_gradient(&self, batch: &[(&FeatureVector, f64)]) -> Result<Grads> {
        let xs: Vec<&FeatureVector> = batch.iter().map(|(x, _)| *x).collect();
        let cache = self.forward_batch(self.input_segments(&xs)?, DropoutMode::Off);
        let n = batch.len() as f64;
        let d = Array1::from_iter(cache.logits.iter().zip(batch).map(|(&z, (_, y))| (sigmoid(z) - y) / n));
        Ok(self.backward(&cache, &d))
    }

    /// Probability of a good match for each input, using weight-scaled
    /// dropout.
    pub fn predict(&self, batch: &[&FeatureVector]) -> Result<Vec<f64>> {
        let cache = self.forward_batch(self.input_segments(batch)?, DropoutMode::Scaled);
        Ok(cache.logits.iter().map(|&z| clamp_open(sigmoid(z))).collect())
    }

    /// First-level activations per block for a single input (inference
    /// scaling), used to check modality isolation.
    pub fn first_level_activations(&self, x: &FeatureVector) -> Result<Vec<Array1<f64>>> {
        let levels = self.encode(self.input_segments(&[x])?, 1);
        Ok(levels[1].iter().map(|h| h.row(0).to_owned()).collect())
    }

    pub fn parameter_count(&self) -> usize {
        self.levels
            .iter()
            .flatten()
            .chain(std::iter::once(&self.output))
            .map(|b| b.weight.len() + b.bias.len())
            .sum()
    }

    /// Visits every parameter mutably in a fixed order: blocks level by level,
    /// output last; within a block, weights row-major then biases.
    pub fn visit_params(&mut self, mut f: impl FnMut(&mut f64)) {
        for b in self
            .levels
            .iter_mut()
            .flatten()
            .chain(std::iter::once(&mut self.output))
        {
            b.weight.iter_mut().for_each(&mut f);
            b.bias.iter_mut().for_each(&mut f);
        }
    }

    pub fn params_finite(&self) -> bool {
        self.levels
            .iter()
            .flatten()
            .chain(std::iter::once(&self.output))
            .all(|b| b.weight.iter().chain(b.bias.iter()).all(|v| v.is_finite()))
    }

    /// Projects every block onto the max-norm ball; returns the largest unit
    /// norm afterwards.
    pub fn project_max_norm(&mut self) -> f64 {
        let c = self.config.maxnorm_c;
        self.levels
            .iter_mut()
            .flatten()
            .chain(std::iter::once(&mut self.output))
            .map(|b| b.project_max_norm(c))
            .fold(0.0, f64::max)
    }

    pub fn max_unit_norm(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .chain(std::iter::once(&self.output))
            .map(Block::max_unit_norm)
            .fold(0.0, f64::max)
    }
}

fn clamp_open(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Splits columns of `d` (laid out as the concatenation of `inputs`) back
/// into per-segment gradients.
fn split_columns(d: &Array2<f64>, inputs: &[usize], widths: &[usize]) -> Vec<Option<Array2<f64>>> {
    let mut out: Vec<Option<Array2<f64>>> = vec![None; widths.len()];
    let mut offset = 0;
    for &seg in inputs {
        let w = widths[seg];
        let part = d.slice(s![.., offset..offset + w]).to_owned();
        offset += w;
        match &mut out[seg] {
            Some(acc) => *acc += &part,
            None => out[seg] = Some(part),
        }
    }
    out
}
