use std::time::Instant;

use super::report::StepReport;
use super::state::TrainState;
use crate::autodiff::{adam_step, AdamConfig, DenseArray, Graph, Var};
use crate::cluster::{aggregate_all, cluster_loss, cluster_loss_in_batch, hard_assignments};
use crate::data::{augment, AugmentPolicy};
use crate::encoder::{BoundEncoder, EncoderWeights};
use crate::error::{Error, Result};
use crate::instance::{gumbel_noise, instance_loss, momentum_embeddings, InstanceBranch};
use crate::metrics::dec_diagnostic;
use crate::rng::{stream_rng, Stream};

/// Which losses a step optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMode {
    /// `alpha·L1 + (1 − alpha)·L2`.
    Joint,
    /// `L2` only; the cluster queue is left alone.
    InstanceOnly,
    /// `L1` only; the instance queue is left alone.
    ClusterOnly,
}

/// `alpha·l1 + (1 − alpha)·l2` as a graph node.
pub fn combined_loss(g: &mut Graph, l1: Var, l2: Var, alpha: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let a = g.scale(l1, alpha)?;
    let b = g.scale(l2, 1.0 - alpha)?;
    g.add(a, b)
}

/// Augments every row of `x` with one stream keyed by `counter`.
pub fn augment_batch(
    x: &DenseArray,
    policy: &AugmentPolicy,
    seed: u64,
    stream: Stream,
    counter: u64,
) -> Result<DenseArray> {
    if policy.is_identity() {
        return Ok(x.clone());
    }
    let mut rng = stream_rng(seed, stream, counter);
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.rows() {
        out.extend(augment(x.row(i), policy, &mut rng)?);
    }
    DenseArray::matrix(x.rows(), x.cols(), out)
}

/// One joint optimizer step on `batch`.
pub fn train_step(state: &mut TrainState, batch: &DenseArray, policy: &AugmentPolicy) -> Result<StepReport> {
    train_step_mode(state, batch, policy, StepMode::Joint)
}

/// One optimizer step in the given mode: augment twice, run both
/// branches, update the online weights, push the momentum outputs to the
/// queues and move the momentum weights.
pub fn train_step_mode(
    state: &mut TrainState,
    batch: &DenseArray,
    policy: &AugmentPolicy,
    mode: StepMode,
) -> Result<StepReport> {
    let step = state.counters.step;
    let rows = batch.rows();
    step_inner(state, batch, policy, mode).map_err(|e| match e {
        Error::NonFiniteInput { context } => Error::NonFiniteLoss {
            step,
            detail: format!("non-finite value in {context} (batch of {rows})"),
        },
        Error::DegenerateNorm { norm, eps, context } => Error::DegenerateNorm {
            norm,
            eps,
            context: format!("{context} at step {step} (batch of {rows})"),
        },
        other => other,
    })
}

struct Branch {
    features: Var,
    probs: Var,
    log_probs: Var,
}

fn forward(g: &mut Graph, enc: &BoundEncoder, x: DenseArray) -> Result<Branch> {
    let xv = g.constant(x)?;
    let features = enc.features(g, xv)?;
    let logits = enc.logits(g, features)?;
    let probs = g.softmax(logits)?;
    let log_probs = g.log_softmax(logits)?;
    Ok(Branch {
        features,
        probs,
        log_probs,
    })
}

/// Cluster representations of one branch, honoring the ablation switches.
fn branch_reps(
    g: &mut Graph,
    enc: &BoundEncoder,
    view: &Branch,
    clean: &DenseArray,
    state: &TrainState,
) -> Result<Var> {
    let (features, probs) = if state.config.no_aug_elements {
        let b = forward(g, enc, clean.clone())?;
        (b.features, b.probs)
    } else {
        (view.features, view.probs)
    };
    let weights = if state.config.hard_assign_aggregate {
        let hard = hard_assignments(g.value(probs));
        g.constant(hard)?
    } else {
        probs
    };
    aggregate_all(g, features, weights)
}

fn step_inner(state: &mut TrainState, batch: &DenseArray, policy: &AugmentPolicy, mode: StepMode) -> Result<StepReport> {
    let start = Instant::now();
    let cfg = state.config.clone();
    let step = state.counters.step;
    let (rows, k) = (batch.rows(), cfg.clusters);
    if rows < 2 || batch.shape().len() != 2 {
        return Err(Error::CountMismatch {
            expected: 2,
            actual: rows,
        });
    }
    let want_l1 = mode != StepMode::InstanceOnly;
    let want_l2 = mode != StepMode::ClusterOnly;
    let alpha = match mode {
        StepMode::Joint => cfg.alpha,
        StepMode::InstanceOnly => 0.0,
        StepMode::ClusterOnly => 1.0,
    };

    let view_a = augment_batch(batch, policy, cfg.seed, Stream::AugmentOnline, step)?;
    let view_b = augment_batch(batch, policy, cfg.seed, Stream::AugmentMomentum, step)?;
    let samples = cfg.gumbel_samples;
    let mut rng = stream_rng(cfg.seed, Stream::GumbelOnline, step);
    let online_noise: Vec<DenseArray> = (0..samples).map(|_| gumbel_noise(&mut rng, rows, k)).collect();
    let mut rng = stream_rng(cfg.seed, Stream::GumbelMomentum, step);
    let momentum_noise: Vec<DenseArray> = (0..samples).map(|_| gumbel_noise(&mut rng, rows, k)).collect();

    // Momentum branch: constants only.
    let mut mg = Graph::new();
    let menc = state.momentum.bind(&mut mg)?;
    let mview = forward(&mut mg, &menc, view_b)?;
    let (positives, enqueue) = if want_l2 {
        momentum_embeddings(&mut mg, &menc, mview.features, mview.log_probs, &momentum_noise, cfg.lambda)?
    } else {
        (Vec::new(), DenseArray::zeros(&[0, cfg.feature_dim]))
    };
    let momentum_reps = if want_l1 {
        let r = branch_reps(&mut mg, &menc, &mview, batch, state)?;
        Some(mg.value(r).clone())
    } else {
        None
    };

    // Online branch.
    let mut g = Graph::new();
    let enc = state.encoder.bind(&mut g)?;
    let view = forward(&mut g, &enc, view_a)?;
    let (mut l1, mut l2) = (0.0, 0.0);
    let (mut mean_kl, mut mean_entropy) = (0.0, 0.0);
    let l2_node = if want_l2 {
        let branch = InstanceBranch {
            encoder: &enc,
            features: view.features,
            probs: view.probs,
            log_probs: view.log_probs,
        };
        let inst = instance_loss(
            &mut g,
            &branch,
            &online_noise,
            &positives,
            &state.instance_queue,
            cfg.tau,
            cfg.lambda,
        )?;
        l2 = g.scalar(inst.loss);
        mean_kl = inst.mean_kl;
        mean_entropy = inst.mean_entropy;
        Some(inst.loss)
    } else {
        None
    };
    let l1_node = match &momentum_reps {
        Some(mr) => {
            let reps = branch_reps(&mut g, &enc, &view, batch, state)?;
            let node = if cfg.uses_cluster_queue() {
                cluster_loss(&mut g, reps, mr, &state.cluster_queue, cfg.tau)?
            } else {
                cluster_loss_in_batch(&mut g, reps, mr, cfg.tau)?
            };
            l1 = g.scalar(node);
            Some(node)
        }
        None => None,
    };
    let total = match (l1_node, l2_node) {
        (Some(a), Some(b)) => combined_loss(&mut g, a, b, alpha)?,
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!("a step optimizes at least one loss"),
    };
    let total_value = g.scalar(total);
    if !total_value.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            detail: format!("total loss {total_value}"),
        });
    }

    let pi = g.value(view.probs).clone();
    let mut histogram = vec![0usize; k];
    let pi_rows: Vec<&[f64]> = (0..pi.rows()).map(|i| pi.row(i)).collect();
    for row in &pi_rows {
        histogram[argmax(row)] += 1;
    }
    let dec = dec_diagnostic(&pi_rows)?;
    if !want_l2 {
        let (kl, h) = batch_kl_entropy(&pi_rows);
        mean_kl = kl;
        mean_entropy = h;
    }

    g.backward(total)?;
    let grads = g.param_grads();
    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    adam_step(&mut state.encoder.params, &grads, &adam)?;
    if let Some(mr) = momentum_reps {
        state.cluster_queue.push_clusters(&mr)?;
    }
    if want_l2 {
        state.instance_queue.push_instances(&enqueue)?;
    }
    state.momentum.update(&state.encoder, cfg.momentum)?;
    state.counters.step += 1;

    Ok(StepReport {
        step,
        alpha,
        total: total_value,
        l1,
        l2,
        mean_kl,
        mean_entropy,
        histogram,
        dec,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn batch_kl_entropy(rows: &[&[f64]]) -> (f64, f64) {
    let k = rows.first().map_or(1, |r| r.len()) as f64;
    let h = rows
        .iter()
        .map(|r| r.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum::<f64>())
        .sum::<f64>()
        / rows.len().max(1) as f64;
    (k.ln() - h, h)
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Cluster labels of `x` without augmentation.
pub fn infer<E: EncoderWeights>(encoder: &E, x: &DenseArray) -> Result<Vec<usize>> {
    Ok(encoder.assign_batch(x)?.iter().map(|a| a.argmax()).collect())
}
