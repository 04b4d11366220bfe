//! Versioned TOML configuration shared by the CLI commands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dtw::DtwParams;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::labels::LabelConfig;
use crate::net::NetConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub folds: usize,
    /// Accuracy counts transfers whose distance to the expert is below this.
    pub threshold: f64,
    pub seed: u64,
    /// Weight of grid overlap in task similarity; language gets the rest.
    pub similarity_pc_weight: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            threshold: 10.0,
            seed: 0,
            similarity_pc_weight: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("eval.folds", "need at least 2 folds"));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::invalid("eval.threshold", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.similarity_pc_weight) {
            return Err(Error::invalid("eval.similarity_pc_weight", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub version: u32,
    pub dtw: DtwParams,
    pub labels: LabelConfig,
    pub net: NetConfig,
    pub features: FeatureConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            version: CONFIG_VERSION,
            dtw: DtwParams::default(),
            labels: LabelConfig::default(),
            net: NetConfig::default(),
            features: FeatureConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                config.version
            )));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.dtw.validate()?;
        self.labels.thresholds.validate()?;
        self.net.validate()?;
        self.features.validate()?;
        self.eval.validate()
    }
}
