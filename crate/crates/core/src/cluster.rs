//! Cluster-level contrast.
//!
//! A cluster is represented by the assignment-weighted sum of batch
//! features, normalized to the unit sphere:
//!
//! ```text
//! r_k = Σ_i π_i(k) f(x_i) / ‖Σ_i π_i(k) f(x_i)‖
//! ```
//!
//! The sum makes `r_k` invariant to batch order, and every datum keeps a
//! strictly positive weight, so loosely related points still contribute
//! a little. Each online `r_k` is contrasted with its momentum twin `r̂_k`
//! against queued representations of *other* clusters:
//!
//! ```text
//! L1 = -(1/K) Σ_k log [ exp(r̂_kᵀr_k/τ) / (exp(r̂_kᵀr_k/τ) + Σ_{l: l mod K ≠ k} exp(p_lᵀr_k/τ)) ]
//! ```

use crate::autodiff::{DenseArray, Graph, Var};
use crate::error::{Error, Result};
use crate::queue::ClusterQueue;

/// Weight floor added to one-hot assignments in hard-aggregation mode so
/// that a cluster with no members in a batch still has a direction.
pub const HARD_ASSIGN_FLOOR: f64 = 1e-8;

/// A unit-norm cluster representation.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterRepresentation {
    pub cluster_id: usize,
    pub r: Vec<f64>,
}

/// All `K` representations at once: `normalize(πᵀ F)`, shape `K × d_m`.
///
/// `features` is `B × d_m`, `assignments` is `B × K`. Differentiable with
/// respect to both inputs.
pub fn aggregate_all(g: &mut Graph, features: Var, assignments: Var) -> Result<Var> {
    let (fb, pb) = (g.value(features).rows(), g.value(assignments).rows());
    if fb != pb {
        return Err(Error::shape(
            "aggregate",
            g.value(features).shape(),
            g.value(assignments).shape(),
        ));
    }
    if fb == 0 {
        return Err(Error::CountMismatch {
            expected: 1,
            actual: 0,
        });
    }
    if g.value(assignments).cols() == 0 {
        return Err(Error::EmptyModel);
    }
    let weighted = g.matmul_tn(assignments, features)?;
    g.l2_normalize(weighted)
}

/// Representation of cluster `k` alone, shape `1 × d_m`.
pub fn aggregate(g: &mut Graph, features: Var, assignments: Var, k: usize) -> Result<Var> {
    let column = g.select_cols(assignments, &[k])?;
    aggregate_all(g, features, column)
}

/// Reads the rows of an aggregated node as typed representations.
pub fn representations(g: &Graph, reps: Var) -> Vec<ClusterRepresentation> {
    let v = g.value(reps);
    (0..v.rows())
        .map(|k| ClusterRepresentation {
            cluster_id: k,
            r: v.row(k).to_vec(),
        })
        .collect()
}

/// One-hot argmax assignments (ties to the lowest index) with a tiny floor,
/// for the hard-aggregation ablation.
pub fn hard_assignments(pi: &DenseArray) -> DenseArray {
    let mut out = DenseArray::filled(&[pi.rows(), pi.cols()], HARD_ASSIGN_FLOOR);
    for i in 0..pi.rows() {
        let row = pi.row(i);
        let mut best = 0;
        for (k, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = k;
            }
        }
        out.row_mut(i)[best] = 1.0;
    }
    out
}

/// Cluster-level InfoNCE against the queue `P`, excluding same-cluster
/// slots. `momentum_reps` (`K × d_m`) and the queue are constants.
pub fn cluster_loss(
    g: &mut Graph,
    reps: Var,
    momentum_reps: &DenseArray,
    queue: &ClusterQueue,
    tau: f64,
) -> Result<Var> {
    let k = g.value(reps).rows();
    if queue.clusters() != k {
        return Err(Error::CountMismatch {
            expected: queue.clusters(),
            actual: k,
        });
    }
    let slot_clusters: Vec<usize> = (0..queue.len()).map(|l| queue.slot_cluster(l)).collect();
    contrast_clusters(g, reps, momentum_reps, &queue.ring().as_matrix(), &slot_clusters, tau)
}

/// Queue-free variant: the other `K − 1` momentum representations of the
/// current batch serve as negatives.
pub fn cluster_loss_in_batch(g: &mut Graph, reps: Var, momentum_reps: &DenseArray, tau: f64) -> Result<Var> {
    let slot_clusters: Vec<usize> = (0..momentum_reps.rows()).collect();
    contrast_clusters(g, reps, momentum_reps, momentum_reps, &slot_clusters, tau)
}

fn contrast_clusters(
    g: &mut Graph,
    reps: Var,
    momentum_reps: &DenseArray,
    negatives: &DenseArray,
    slot_clusters: &[usize],
    tau: f64,
) -> Result<Var> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidTemperature(tau));
    }
    let k = g.value(reps).rows();
    if k == 0 {
        return Err(Error::EmptyModel);
    }
    let momentum = g.constant(momentum_reps.clone())?;
    let positive = g.row_dot(reps, momentum)?;
    let positive = g.scale(positive, 1.0 / tau)?;
    if slot_clusters.is_empty() {
        // No negatives: every term is log(e^s / e^s) = 0.
        let zero = g.sub(positive, positive)?;
        return g.mean(zero);
    }
    let neg_const = g.constant(negatives.clone())?;
    let neg = g.matmul_nt(reps, neg_const)?;
    let neg = g.scale(neg, 1.0 / tau)?;
    let logits = g.concat_cols(positive, neg)?;
    let n = slot_clusters.len();
    let mut mask = Vec::with_capacity(k * (n + 1));
    for row in 0..k {
        mask.push(true);
        mask.extend(slot_clusters.iter().map(|&c| c != row));
    }
    let lse = g.log_sum_exp_masked(logits, Some(mask))?;
    let per_cluster = g.sub(lse, positive)?;
    g.mean(per_cluster)
}
