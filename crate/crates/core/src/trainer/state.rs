use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::report::EpochAccumulator;
use crate::encoder::{Encoder, MomentumEncoder};
use crate::error::{Error, Result};
use crate::queue::{ClusterQueue, InstanceQueue};
use crate::rng::{stream_rng, Stream};

/// Format tag written at the top of every checkpoint.
pub const CHECKPOINT_FORMAT: &str = "tcc-checkpoint/1";

/// Progress counters. Every random draw is keyed by these, so they are
/// the whole RNG state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Completed optimizer steps.
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
    /// Batches already consumed in the current epoch.
    pub batch_in_epoch: u64,
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Resolved configuration (no `auto` sizes left).
    pub config: TrainConfig,
    pub encoder: Encoder,
    pub momentum: MomentumEncoder,
    pub cluster_queue: ClusterQueue,
    pub instance_queue: InstanceQueue,
    pub counters: Counters,
    /// Epoch-level total losses, oldest first.
    pub loss_history: Vec<f64>,
    /// Running sums for the epoch in progress.
    pub epoch_acc: EpochAccumulator,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    state: TrainState,
}

impl TrainState {
    /// A fresh model for `input_dim`-wide data. `config` must already be
    /// resolved against the dataset size.
    pub fn new(config: &TrainConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let (l, j) = match (config.cluster_queue, config.instance_queue, config.batch_size) {
            (Some(l), Some(j), Some(_)) => (l, j),
            _ => return Err(Error::Config("configuration is not resolved".into())),
        };
        let enc_cfg = config.encoder_config(input_dim);
        let mut rng = stream_rng(config.seed, Stream::Init, 0);
        let encoder = Encoder::init(enc_cfg, &mut rng)?;
        let momentum = MomentumEncoder::from_online(&encoder);
        Ok(Self {
            config: config.clone(),
            cluster_queue: ClusterQueue::new(l, config.clusters, config.feature_dim)?,
            instance_queue: InstanceQueue::new(j, config.feature_dim),
            encoder,
            momentum,
            counters: Counters::default(),
            loss_history: Vec::new(),
            epoch_acc: EpochAccumulator::default(),
            converged: false,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.config.batch_size.unwrap_or(2)
    }

    pub fn to_json(&self) -> Result<String> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            state: self.clone(),
        };
        serde_json::to_string(&ckpt).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            other => {
                return Err(Error::Checkpoint(format!(
                    "unsupported format {other:?}, expected {CHECKPOINT_FORMAT}"
                )))
            }
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.state.config.validate()?;
        Encoder::from_params(ckpt.state.encoder.config.clone(), ckpt.state.encoder.params.clone())?;
        Ok(ckpt.state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
