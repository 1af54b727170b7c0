use serde::{Deserialize, Serialize};

use crate::data::AugmentPolicy;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

/// Every training hyperparameter. `None` queue and batch sizes are filled
/// from the dataset size by [`TrainConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub clusters: usize,
    /// Weight of the cluster-level loss; `1 − alpha` goes to the instance loss.
    pub alpha: f64,
    /// InfoNCE temperature.
    pub tau: f64,
    /// Gumbel-softmax temperature.
    pub lambda: f64,
    /// Cluster queue size `L`; 0 uses the other clusters of the batch.
    pub cluster_queue: Option<usize>,
    /// Instance queue size `J`.
    pub instance_queue: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    /// EMA coefficient `m` of the momentum encoder.
    pub momentum: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub gumbel_samples: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    /// Augmentation policy id: `vector`, `none` or `image:<H>x<W>`.
    pub augment: String,
    /// Vector-mode noise level as a fraction of the mean feature std.
    pub aug_noise: f64,
    /// Vector-mode global scale range `s` in `[1 − s, 1 + s]`.
    pub aug_scale: f64,
    /// Vector-mode coordinate dropout probability.
    pub aug_dropout: f64,
    pub normalize_prototypes: bool,
    /// Cluster loss sees un-augmented inputs; the instance loss is unchanged.
    pub no_aug_elements: bool,
    /// Aggregate clusters from one-hot argmax assignments.
    pub hard_assign_aggregate: bool,
    /// Alternate a full instance-loss epoch with one cluster-loss step on
    /// whole-dataset aggregates.
    pub alternating: bool,
    /// Relative change of the moving-average loss that counts as
    /// converged; 0 disables the test.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    /// Write a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            alpha: 0.5,
            tau: 1.0,
            lambda: 0.8,
            cluster_queue: None,
            instance_queue: None,
            batch_size: None,
            learning_rate: 3e-3,
            momentum: 0.999,
            max_epochs: 200,
            seed: 0,
            gumbel_samples: 1,
            hidden: vec![64, 64],
            feature_dim: 16,
            augment: "vector".into(),
            aug_noise: 0.05,
            aug_scale: 0.1,
            aug_dropout: 0.02,
            normalize_prototypes: false,
            no_aug_elements: false,
            hard_assign_aggregate: false,
            alternating: false,
            convergence_tol: 1e-4,
            convergence_window: 20,
            checkpoint_every: 0,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in canonical order.
pub const CONFIG_KEYS: &[&str] = &[
    "clusters",
    "alpha",
    "tau",
    "lambda",
    "cluster_queue",
    "instance_queue",
    "batch_size",
    "learning_rate",
    "momentum",
    "max_epochs",
    "seed",
    "gumbel_samples",
    "hidden",
    "feature_dim",
    "augment",
    "aug_noise",
    "aug_scale",
    "aug_dropout",
    "normalize_prototypes",
    "no_aug_elements",
    "hard_assign_aggregate",
    "alternating",
    "convergence_tol",
    "convergence_window",
    "checkpoint_every",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn parse_size(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_size(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".into(), |v| v.to_string())
}

impl TrainConfig {
    /// Sets one field from its textual form. `k` is accepted for
    /// `clusters`; queue and batch sizes accept `auto`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "clusters" | "k" => self.clusters = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "cluster_queue" => self.cluster_queue = parse_size(key, value)?,
            "instance_queue" => self.instance_queue = parse_size(key, value)?,
            "batch_size" => self.batch_size = parse_size(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "gumbel_samples" => self.gumbel_samples = parse(key, value)?,
            "hidden" => {
                self.hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| parse(key, v.trim()))
                        .collect::<Result<_>>()?
                }
            }
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "augment" => self.augment = value.to_string(),
            "aug_noise" => self.aug_noise = parse(key, value)?,
            "aug_scale" => self.aug_scale = parse(key, value)?,
            "aug_dropout" => self.aug_dropout = parse(key, value)?,
            "normalize_prototypes" => self.normalize_prototypes = parse_bool(key, value)?,
            "no_aug_elements" => self.no_aug_elements = parse_bool(key, value)?,
            "hard_assign_aggregate" => self.hard_assign_aggregate = parse_bool(key, value)?,
            "alternating" => self.alternating = parse_bool(key, value)?,
            "no_cluster_queue" => {
                if parse_bool(key, value)? {
                    self.cluster_queue = Some(0);
                }
            }
            "convergence_tol" => self.convergence_tol = parse(key, value)?,
            "convergence_window" => self.convergence_window = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Textual form of one field, the inverse of [`TrainConfig::set`].
    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "clusters" | "k" => self.clusters.to_string(),
            "alpha" => self.alpha.to_string(),
            "tau" => self.tau.to_string(),
            "lambda" => self.lambda.to_string(),
            "cluster_queue" => show_size(self.cluster_queue),
            "instance_queue" => show_size(self.instance_queue),
            "batch_size" => show_size(self.batch_size),
            "learning_rate" => self.learning_rate.to_string(),
            "momentum" => self.momentum.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "seed" => self.seed.to_string(),
            "gumbel_samples" => self.gumbel_samples.to_string(),
            "hidden" => self
                .hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "feature_dim" => self.feature_dim.to_string(),
            "augment" => self.augment.clone(),
            "aug_noise" => self.aug_noise.to_string(),
            "aug_scale" => self.aug_scale.to_string(),
            "aug_dropout" => self.aug_dropout.to_string(),
            "normalize_prototypes" => self.normalize_prototypes.to_string(),
            "no_aug_elements" => self.no_aug_elements.to_string(),
            "hard_assign_aggregate" => self.hard_assign_aggregate.to_string(),
            "alternating" => self.alternating.to_string(),
            "convergence_tol" => self.convergence_tol.to_string(),
            "convergence_window" => self.convergence_window.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        })
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Every field as `key = value` lines, in canonical order.
    pub fn to_kv(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn uses_cluster_queue(&self) -> bool {
        self.cluster_queue != Some(0)
    }

    /// Fills queue and batch sizes for a dataset of `n` points:
    /// `J = min(12800, n/2)`, `L = min(100K, 10n/K)` rounded down to a
    /// multiple of `K`, batch `= min(32K, n)`.
    pub fn resolve(&self, n: usize) -> Result<Self> {
        let k = self.clusters.max(1);
        let mut out = self.clone();
        out.instance_queue.get_or_insert(12_800.min(n / 2));
        out.cluster_queue.get_or_insert((100 * k).min(10 * n / k) / k * k);
        out.batch_size.get_or_insert((32 * k).min(n));
        out.validate()?;
        if out.batch_size.unwrap_or(0) > n {
            return Err(Error::Config(format!(
                "batch_size {} exceeds dataset size {n}",
                out.batch_size.unwrap_or(0)
            )));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.clusters < 2 {
            return fail(format!("clusters must be >= 2, got {}", self.clusters));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        for (name, v) in [("tau", self.tau), ("lambda", self.lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1], got {}", self.momentum));
        }
        if let Some(l) = self.cluster_queue {
            if l % self.clusters != 0 {
                return fail(format!("cluster_queue {l} is not a multiple of K={}", self.clusters));
            }
        }
        if let Some(b) = self.batch_size {
            if b < 2 {
                return fail(format!("batch_size must be >= 2, got {b}"));
            }
        }
        if self.gumbel_samples == 0 {
            return fail("gumbel_samples must be >= 1".into());
        }
        if self.feature_dim == 0 || self.hidden.contains(&0) {
            return fail("layer widths must be positive".into());
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return fail(format!("convergence_tol must be >= 0, got {}", self.convergence_tol));
        }
        if self.convergence_window == 0 {
            return fail("convergence_window must be >= 1".into());
        }
        Ok(())
    }

    /// The augmentation policy for data with mean feature std `feature_std`.
    pub fn augment_policy(&self, feature_std: f64) -> Result<AugmentPolicy> {
        let mut policy = AugmentPolicy::from_id(&self.augment, feature_std)?;
        if self.augment == "vector" {
            policy.noise_sigma = self.aug_noise * feature_std;
            policy.scale = self.aug_scale;
            policy.dropout = self.aug_dropout;
        }
        policy.validate()?;
        Ok(policy)
    }

    pub fn encoder_config(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            input_dim,
            hidden: self.hidden.clone(),
            feature_dim: self.feature_dim,
            clusters: self.clusters,
            normalize_prototypes: self.normalize_prototypes,
        }
    }
}
