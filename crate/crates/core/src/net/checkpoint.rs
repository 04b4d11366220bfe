use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::MultimodalNet;
use super::{Featurizer, TransferModel};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, Vocabulary};

const FORMAT: &str = "robotransfer-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Body {
    format: String,
    version: u32,
    vocab_id: String,
    vocab: Vocabulary,
    features: FeatureConfig,
    net: MultimodalNet,
}

/// On-disk model: network configuration and weights (row-major), the
/// vocabulary and featurization settings, and a SHA-256 of the body.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(flatten)]
    body: Body,
    hash: String,
}

fn body_hash(body: &Body) -> Result<String> {
    let bytes = serde_json::to_vec(body)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl Checkpoint {
    pub fn from_model(model: &TransferModel) -> Result<Self> {
        let body = Body {
            format: FORMAT.into(),
            version: VERSION,
            vocab_id: model.featurizer.vocab.id().to_string(),
            vocab: model.featurizer.vocab.clone(),
            features: model.featurizer.config,
            net: model.net.clone(),
        };
        let hash = body_hash(&body)?;
        Ok(Checkpoint { body, hash })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and verifies a checkpoint: format, version, content hash,
    /// vocabulary id and every weight shape against the recorded
    /// configuration and feature dimensions.
    pub fn from_json(text: &str) -> Result<TransferModel> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        let body = ckpt.body;
        if body.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", body.format)));
        }
        if body.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", body.version)));
        }
        let actual = body_hash(&body)?;
        if actual != ckpt.hash {
            return Err(Error::Checkpoint(format!(
                "content hash mismatch: recorded {}, computed {actual}",
                ckpt.hash
            )));
        }
        if body.vocab_id != body.vocab.id() {
            return Err(Error::Checkpoint("vocabulary id does not match its tokens".into()));
        }
        check_shapes(&body.net)?;
        let featurizer = Featurizer::new(body.vocab, body.features);
        TransferModel::new(body.net, featurizer)
    }

    pub fn save(model: &TransferModel, path: &Path) -> Result<String> {
        let ckpt = Checkpoint::from_model(model)?;
        std::fs::write(path, ckpt.to_json()?).map_err(|e| Error::io(path, e))?;
        Ok(ckpt.hash)
    }

    pub fn load(path: &Path) -> Result<TransferModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}

fn check_shapes(net: &MultimodalNet) -> Result<()> {
    net.config.validate()?;
    let layout = net.config.layout();
    if layout.len() != net.levels.len() {
        return Err(Error::Checkpoint("level count does not match wiring".into()));
    }
    let mut widths: Vec<usize> = net.input_dims.to_vec();
    for (l, (spec, blocks)) in layout.iter().zip(&net.levels).enumerate() {
        if spec.len() != blocks.len() {
            return Err(Error::Checkpoint(format!(
                "level {} has the wrong number of blocks",
                l + 1
            )));
        }
        let mut next = Vec::new();
        for (k, ((inputs, width), block)) in spec.iter().zip(blocks).enumerate() {
            let fan_in: usize = inputs.iter().map(|&i| widths[i]).sum();
            if &block.inputs != inputs || block.weight.dim() != (fan_in, *width) || block.bias.len() != *width {
                return Err(Error::Checkpoint(format!(
                    "level {} block {k}: expected {fan_in}x{width} weights",
                    l + 1
                )));
            }
            next.push(*width);
        }
        widths = next;
    }
    let top: usize = widths.iter().sum();
    if net.output.weight.dim() != (top, 1) || net.output.bias.len() != 1 {
        return Err(Error::Checkpoint("output layer has the wrong shape".into()));
    }
    if !net.params_finite() {
        return Err(Error::Checkpoint("non-finite parameters".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> TransferModel {
        let vocab = Vocabulary::from_tokens(["handle", "pull", "turn"].map(String::from)).unwrap();
        let featurizer = Featurizer::new(vocab, FeatureConfig::default());
        let config = NetConfig {
            h1_pc: 3,
            h1_lang: 2,
            h1_traj: 2,
            h2_pt: 2,
            h2_lt: 2,
            h3: 2,
            ..NetConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MultimodalNet::new(config, featurizer.input_dims(), &mut rng).unwrap();
        TransferModel::new(net, featurizer).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let text = Checkpoint::from_model(&m).unwrap().to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back.net, m.net);
        assert_eq!(back.featurizer.vocab, m.featurizer.vocab);
    }

    #[test]
    fn tampering_is_detected() {
        let m = model();
        let text = Checkpoint::from_model(&m).unwrap().to_json().unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["net"]["output"]["bias"]["data"][0] = serde_json::json!(0.125);
        let err = Checkpoint::from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("hash"), "{err}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut m = model();
        m.net.config.h3 = 5;
        let ckpt = Checkpoint::from_model(&m).unwrap();
        let err = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }
}
