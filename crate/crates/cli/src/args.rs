use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tcc::data::{DatasetSpec, GeneratorParams};
use tcc::trainer::TrainConfig;

use crate::error::{CliError, CliResult};

/// Twin-contrast clustering on small datasets.
#[derive(Debug, Parser)]
#[command(name = "tcc", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its run directory.
    Train(TrainArgs),
    /// Score a checkpoint against labeled data; prints `acc,nmi,ari`.
    Eval(EvalArgs),
    /// Write per-row cluster assignments for a CSV file.
    Assign(AssignArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Write feature embeddings and the assignment histogram.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// `two_moons`, `blobs`, `rings` or `csv:<path>`.
    #[arg(long)]
    pub dataset: String,
    /// Number of generated points.
    #[arg(long)]
    pub n: Option<usize>,
    /// Generated classes (blobs, rings); defaults to the cluster count.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Generator noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Half-width of the box holding blob centers.
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

impl DataArgs {
    pub fn spec(&self) -> CliResult<DatasetSpec> {
        self.dataset.parse().map_err(CliError::config)
    }

    pub fn params(&self, default_classes: usize) -> GeneratorParams {
        let d = GeneratorParams::default();
        GeneratorParams {
            n: self.n.unwrap_or(d.n),
            classes: self.classes.unwrap_or(default_classes),
            noise: self.noise.unwrap_or(d.noise),
            spread: self.spread.unwrap_or(d.spread),
            seed: self.data_seed,
        }
    }
}

/// Training hyperparameters. Flags override the config file, which
/// overrides `TCC_SEED`, which overrides the defaults.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Any config key, e.g. `--set tau=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, alias = "clusters")]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Cluster queue size (`auto` or a multiple of K).
    #[arg(long)]
    pub cluster_queue: Option<String>,
    #[arg(long)]
    pub instance_queue: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gumbel_samples: Option<usize>,
    /// `vector`, `none` or `image:<H>x<W>`.
    #[arg(long)]
    pub augment: Option<String>,
    /// Use the other clusters of the batch instead of a queue.
    #[arg(long)]
    pub no_cluster_queue: bool,
    /// Aggregate clusters from un-augmented inputs.
    #[arg(long)]
    pub no_aug_elements: bool,
    #[arg(long)]
    pub hard_assign_aggregate: bool,
    #[arg(long)]
    pub alternating: bool,
    #[arg(long)]
    pub normalize_prototypes: bool,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<TrainConfig> {
        self.resolve_with(std::env::var("TCC_SEED").ok())
    }

    pub fn resolve_with(&self, env_seed: Option<String>) -> CliResult<TrainConfig> {
        let mut cfg = TrainConfig::default();
        let mut file_sets_seed = false;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            file_sets_seed = text.lines().any(|l| {
                let l = l.split('#').next().unwrap_or("");
                l.split_once('=').is_some_and(|(k, _)| k.trim() == "seed")
            });
            cfg.apply_kv(&text).map_err(CliError::config)?;
        }
        if let (false, None, Some(seed)) = (file_sets_seed, self.seed, env_seed) {
            cfg.set("seed", seed.trim())
                .map_err(|e| CliError::Config(format!("TCC_SEED: {e}")))?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim()).map_err(CliError::config)?;
        }
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let opt = |v: Option<String>, key: &'static str, pairs: &mut Vec<(&str, String)>| {
            if let Some(v) = v {
                pairs.push((key, v));
            }
        };
        opt(self.k.map(|v| v.to_string()), "clusters", &mut pairs);
        opt(self.alpha.map(|v| v.to_string()), "alpha", &mut pairs);
        opt(self.tau.map(|v| v.to_string()), "tau", &mut pairs);
        opt(self.lambda.map(|v| v.to_string()), "lambda", &mut pairs);
        opt(self.cluster_queue.clone(), "cluster_queue", &mut pairs);
        opt(self.instance_queue.clone(), "instance_queue", &mut pairs);
        opt(self.batch_size.clone(), "batch_size", &mut pairs);
        opt(self.lr.map(|v| v.to_string()), "learning_rate", &mut pairs);
        opt(self.momentum.map(|v| v.to_string()), "momentum", &mut pairs);
        opt(self.epochs.map(|v| v.to_string()), "max_epochs", &mut pairs);
        opt(self.seed.map(|v| v.to_string()), "seed", &mut pairs);
        opt(self.gumbel_samples.map(|v| v.to_string()), "gumbel_samples", &mut pairs);
        opt(self.augment.clone(), "augment", &mut pairs);
        opt(self.checkpoint_every.map(|v| v.to_string()), "checkpoint_every", &mut pairs);
        for (flag, key) in [
            (self.no_cluster_queue, "no_cluster_queue"),
            (self.no_aug_elements, "no_aug_elements"),
            (self.hard_assign_aggregate, "hard_assign_aggregate"),
            (self.alternating, "alternating"),
            (self.normalize_prototypes, "normalize_prototypes"),
        ] {
            if flag {
                pairs.push((key, "true".into()));
            }
        }
        for (k, v) in pairs {
            cfg.set(k, &v).map_err(CliError::config)?;
        }
        cfg.validate().map_err(CliError::config)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Run directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint instead of starting fresh. Only
    /// `--epochs` is honored from the config flags.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV in the dataset grammar; a label column is ignored.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 2)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    /// Number of random fixtures.
    #[arg(long, default_value_t = 3)]
    pub trials: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// Corrupt the backward rule of one operation, e.g. `softmax`.
    #[arg(long)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}
