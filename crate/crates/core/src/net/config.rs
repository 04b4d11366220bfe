use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the three input modalities are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wiring {
    /// Separate first layer per modality; second layer pairs point cloud with
    /// trajectory and language with trajectory; third layer joins both.
    #[default]
    Multimodal,
    /// All modalities concatenated into a single fully connected trunk with
    /// the same total widths.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub wiring: Wiring,
    pub h1_pc: usize,
    pub h1_lang: usize,
    pub h1_traj: usize,
    pub h2_pt: usize,
    pub h2_lt: usize,
    pub h3: usize,
    /// Probability that an input element is zeroed during pretraining.
    pub corruption_p: f64,
    /// Weight of the L1 activation penalty during pretraining.
    pub sparsity_lambda: f64,
    /// Bound on the L2 norm of each unit's incoming weight vector.
    pub maxnorm_c: f64,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub pretrain_learning_rate: f64,
    /// Learning rate at epoch `e` is `lr / (1 + lr_decay·e)`.
    pub lr_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs_pretrain: usize,
    pub epochs_finetune: usize,
    pub rng_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            wiring: Wiring::Multimodal,
            h1_pc: 250,
            h1_lang: 150,
            h1_traj: 100,
            h2_pt: 200,
            h2_lt: 200,
            h3: 150,
            corruption_p: 0.3,
            sparsity_lambda: 1e-4,
            maxnorm_c: 3.0,
            dropout_rate: 0.5,
            learning_rate: 0.01,
            pretrain_learning_rate: 0.003,
            lr_decay: 1.0,
            momentum: 0.9,
            batch_size: 32,
            epochs_pretrain: 10,
            epochs_finetune: 30,
            rng_seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("h1_pc", self.h1_pc),
            ("h1_lang", self.h1_lang),
            ("h1_traj", self.h1_traj),
            ("h2_pt", self.h2_pt),
            ("h2_lt", self.h2_lt),
            ("h3", self.h3),
            ("batch_size", self.batch_size),
            ("epochs_pretrain", self.epochs_pretrain),
            ("epochs_finetune", self.epochs_finetune),
        ];
        for (name, w) in widths {
            if w == 0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        let unit_interval = [
            ("corruption_p", self.corruption_p),
            ("dropout_rate", self.dropout_rate),
            ("momentum", self.momentum),
        ];
        for (name, v) in unit_interval {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(name, format!("{v} is outside [0, 1)")));
            }
        }
        let positive = [
            ("maxnorm_c", self.maxnorm_c),
            ("learning_rate", self.learning_rate),
            ("pretrain_learning_rate", self.pretrain_learning_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("{v} must be finite and > 0")));
            }
        }
        for (name, v) in [("sparsity_lambda", self.sparsity_lambda), ("lr_decay", self.lr_decay)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Block layout per hidden level: `(inputs from the previous level, width)`.
    /// Level 0 segments are the modalities `[pc, lang, traj]`.
    pub fn layout(&self) -> Vec<Vec<(Vec<usize>, usize)>> {
        match self.wiring {
            Wiring::Multimodal => vec![
                vec![(vec![0], self.h1_pc), (vec![1], self.h1_lang), (vec![2], self.h1_traj)],
                vec![(vec![0, 2], self.h2_pt), (vec![1, 2], self.h2_lt)],
                vec![(vec![0, 1], self.h3)],
            ],
            Wiring::Flat => vec![
                vec![(vec![0, 1, 2], self.h1_pc + self.h1_lang + self.h1_traj)],
                vec![(vec![0], self.h2_pt + self.h2_lt)],
                vec![(vec![0], self.h3)],
            ],
        }
    }
}
