use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tcc::data::Dataset;
use tcc::trainer::TrainConfig;

use crate::error::{CliError, CliResult};

pub const MANIFEST_FORMAT: &str = "tcc-manifest/1";

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub spec: String,
    pub name: String,
    pub n: usize,
    pub dim: usize,
    pub labeled: bool,
    /// SHA-256 of the shape, the little-endian feature bytes and the labels.
    pub fingerprint: String,
    pub generator: BTreeMap<String, String>,
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: String,
    /// Resolved configuration, one entry per config key.
    pub config: BTreeMap<String, String>,
    pub dataset: DatasetInfo,
    pub seed: u64,
    pub started: String,
    pub finished: Option<String>,
    pub resumed_from: Option<String>,
}

pub fn fingerprint(dataset: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((dataset.len() as u64).to_le_bytes());
    h.update((dataset.dim() as u64).to_le_bytes());
    for v in dataset.x().data() {
        h.update(v.to_le_bytes());
    }
    if let Some(labels) = dataset.labels() {
        for &l in labels {
            h.update((l as u64).to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_map(config: &TrainConfig) -> BTreeMap<String, String> {
    config
        .to_kv()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(CliError::output)?;
        std::fs::write(path, text + "\n").map_err(CliError::output)
    }
}
