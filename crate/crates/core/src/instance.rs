//! Instance-level contrast with reparametrized cluster assignments.
//!
//! The discrete assignment `k ~ q(k|x)` is relaxed with a Gumbel-softmax
//! code `c = softmax((log π + ε)/λ)`, `ε ~ Gumbel(0, 1)`. The code shifts
//! the datum's feature through a linear head before normalization, and the
//! result is contrasted against its momentum twin and the queue `Q`. With
//! a uniform prior the KL term has the closed form `log K − H(π)`.
//!
//! The reported instance loss follows the formulation
//! `L2 = mean(nll) − mean(H(π)) − log K`, which equals
//! `mean(nll) + mean(KL) − 2 log K`. The constant shifts the value but not
//! the gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{l2_norm, softmax_in_place, DenseArray, Graph, Var, NORM_EPS};
use crate::encoder::{AssignmentDistribution, BoundEncoder};
use crate::error::{Error, Result};
use crate::queue::InstanceQueue;

/// Uniform draws are clamped to `[UNIFORM_CLAMP, 1 − UNIFORM_CLAMP]` before
/// the double logarithm.
pub const UNIFORM_CLAMP: f64 = 1e-12;

/// A relaxed one-hot code on the open simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelSample {
    pub codes: Vec<f64>,
    pub lambda: f64,
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(t))
    }
}

/// One standard Gumbel variate, `−log(−log u)`.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -(-u.ln()).ln()
}

/// A `rows × k` matrix of independent Gumbel noise.
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R, rows: usize, k: usize) -> DenseArray {
    let data = (0..rows * k).map(|_| gumbel(rng)).collect();
    DenseArray::matrix(rows, k, data).expect("shape")
}

/// Draws `c(k) = softmax_k((log π(k) + ε(k)) / λ)`.
pub fn gumbel_sample<R: Rng + ?Sized>(
    pi: &AssignmentDistribution,
    lambda: f64,
    rng: &mut R,
) -> Result<GumbelSample> {
    check_temperature(lambda)?;
    let mut codes: Vec<f64> = pi
        .probs()
        .iter()
        .map(|&p| (p.ln() + gumbel(rng)) / lambda)
        .collect();
    softmax_in_place(&mut codes);
    Ok(GumbelSample { codes, lambda })
}

/// Graph version of the relaxation with pre-drawn noise, so the draw can be
/// frozen for gradient checks.
pub fn gumbel_softmax(g: &mut Graph, log_pi: Var, noise: &DenseArray, lambda: f64) -> Result<Var> {
    check_temperature(lambda)?;
    let eps = g.constant(noise.clone())?;
    let shifted = g.add(log_pi, eps)?;
    let scaled = g.scale(shifted, 1.0 / lambda)?;
    g.softmax(scaled)
}

/// `KL(π ‖ uniform) = log K − H(π)`.
pub fn kl_to_uniform(pi: &AssignmentDistribution) -> f64 {
    (pi.len() as f64).ln() - pi.entropy()
}

/// Per-row `KL(π ‖ uniform)` on the graph, from probabilities and their
/// logarithms (both `B × K`). Returns `B × 1`.
pub fn kl_to_uniform_node(g: &mut Graph, pi: Var, log_pi: Var) -> Result<Var> {
    let k = g.value(pi).cols() as f64;
    let neg_entropy = g.row_dot(pi, log_pi)?;
    g.add_scalar(neg_entropy, k.ln())
}

/// Per-row InfoNCE negative log-likelihood, `B × 1`:
/// `−log[exp(êᵀe/τ) / (exp(êᵀe/τ) + Σ_j exp(q_jᵀe/τ))]`.
///
/// `positives` and the queue are constants.
pub fn instance_nll(
    g: &mut Graph,
    embeddings: Var,
    positives: &DenseArray,
    queue: &InstanceQueue,
    tau: f64,
) -> Result<Var> {
    check_temperature(tau)?;
    let pos_const = g.constant(positives.clone())?;
    let pos = g.row_dot(embeddings, pos_const)?;
    let pos = g.scale(pos, 1.0 / tau)?;
    if queue.is_empty() {
        return g.sub(pos, pos);
    }
    let bank = g.constant(queue.ring().as_matrix())?;
    let neg = g.matmul_nt(embeddings, bank)?;
    let neg = g.scale(neg, 1.0 / tau)?;
    let logits = g.concat_cols(pos, neg)?;
    let lse = g.log_sum_exp(logits)?;
    g.sub(lse, pos)
}

/// Online-branch inputs of the instance loss for one batch.
pub struct InstanceBranch<'a> {
    pub encoder: &'a BoundEncoder,
    /// `f(x)` of the online view, `B × d_m`.
    pub features: Var,
    /// `π`, `B × K`.
    pub probs: Var,
    /// `log π`, `B × K`.
    pub log_probs: Var,
}

/// The instance loss and its reported parts.
#[derive(Debug)]
pub struct InstanceLoss {
    pub loss: Var,
    /// Mean NLL over data and Gumbel samples.
    pub mean_nll: f64,
    pub mean_kl: f64,
    pub mean_entropy: f64,
    /// `loss − mean_nll − mean_kl`, i.e. `−2 log K`.
    pub constant: f64,
}

/// `L2 = mean_i[ mean_s nll(e_is, ê_is) ] − mean_i H(π_i) − log K`.
///
/// `online_noise[s]` and `positives[s]` are the online Gumbel draws and the
/// momentum embeddings of sample `s`; one sample is the default.
pub fn instance_loss(
    g: &mut Graph,
    branch: &InstanceBranch<'_>,
    online_noise: &[DenseArray],
    positives: &[DenseArray],
    queue: &InstanceQueue,
    tau: f64,
    lambda: f64,
) -> Result<InstanceLoss> {
    if online_noise.is_empty() || online_noise.len() != positives.len() {
        return Err(Error::CountMismatch {
            expected: online_noise.len().max(1),
            actual: positives.len(),
        });
    }
    let samples = online_noise.len() as f64;
    let mut nll_total: Option<Var> = None;
    for (noise, positive) in online_noise.iter().zip(positives) {
        let codes = gumbel_softmax(g, branch.log_probs, noise, lambda)?;
        let e = branch.encoder.instance_embed(g, branch.features, codes)?;
        let nll = instance_nll(g, e, positive, queue, tau)?;
        let m = g.mean(nll)?;
        nll_total = Some(match nll_total {
            None => m,
            Some(acc) => g.add(acc, m)?,
        });
    }
    let nll = g.scale(nll_total.expect("at least one sample"), 1.0 / samples)?;
    let kl_rows = kl_to_uniform_node(g, branch.probs, branch.log_probs)?;
    let kl = g.mean(kl_rows)?;
    let k = g.value(branch.probs).cols() as f64;
    let constant = -2.0 * k.ln();
    let sum = g.add(nll, kl)?;
    let loss = g.add_scalar(sum, constant)?;
    let (mean_nll, mean_kl) = (g.scalar(nll), g.scalar(kl));
    Ok(InstanceLoss {
        loss,
        mean_nll,
        mean_kl,
        mean_entropy: k.ln() - mean_kl,
        constant,
    })
}

/// Momentum embeddings `ê = normalize(f̂(x) + NN̂(ĉ))` for each Gumbel draw,
/// plus the normalized mean over draws used for enqueueing.
pub fn momentum_embeddings(
    g: &mut Graph,
    encoder: &BoundEncoder,
    features: Var,
    log_probs: Var,
    noise: &[DenseArray],
    lambda: f64,
) -> Result<(Vec<DenseArray>, DenseArray)> {
    let mut per_sample = Vec::with_capacity(noise.len());
    let mut nodes = Vec::with_capacity(noise.len());
    for n in noise {
        let c = gumbel_softmax(g, log_probs, n, lambda)?;
        let e = encoder.instance_embed(g, features, c)?;
        per_sample.push(g.value(e).clone());
        nodes.push(e);
    }
    let enqueue = if nodes.len() == 1 {
        per_sample[0].clone()
    } else {
        let mut out = elementwise_mean(&per_sample);
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let n = l2_norm(row);
            if n <= NORM_EPS {
                return Err(Error::DegenerateNorm {
                    norm: n,
                    eps: NORM_EPS,
                    context: "mean momentum embedding".into(),
                });
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        out
    };
    Ok((per_sample, enqueue))
}

fn elementwise_mean(arrays: &[DenseArray]) -> DenseArray {
    let mut out = arrays[0].clone();
    for a in &arrays[1..] {
        for (o, v) in out.data_mut().iter_mut().zip(a.data()) {
            *o += v;
        }
    }
    let n = arrays.len() as f64;
    out.data_mut().iter_mut().for_each(|v| *v /= n);
    out
}

/// Exact marginal log-likelihood and its evidence lower bound under a
/// uniform prior:
///
/// ```text
/// lhs = log Σ_k p(k) a(k)
/// rhs = Σ_k q(k) log a(k) − KL(q ‖ p)
/// ```
///
/// Jensen's inequality guarantees `lhs ≥ rhs`.
pub fn elbo_gap_check(q: &AssignmentDistribution, likelihoods: &[f64]) -> Result<(f64, f64)> {
    let k = q.len();
    elbo_gap_check_with_prior(q, &vec![1.0 / k as f64; k], likelihoods)
}

/// [`elbo_gap_check`] with an arbitrary positive prior `p`.
pub fn elbo_gap_check_with_prior(
    q: &AssignmentDistribution,
    prior: &[f64],
    likelihoods: &[f64],
) -> Result<(f64, f64)> {
    if likelihoods.len() != q.len() || prior.len() != q.len() {
        return Err(Error::CountMismatch {
            expected: q.len(),
            actual: likelihoods.len(),
        });
    }
    if let Some(&bad) = likelihoods.iter().chain(prior).find(|&&a| a.is_nan() || a <= 0.0) {
        return Err(Error::NonPositiveLikelihood(bad));
    }
    let lhs = prior
        .iter()
        .zip(likelihoods)
        .map(|(p, a)| p * a)
        .sum::<f64>()
        .ln();
    let expected_log = q.probs().iter().zip(likelihoods).map(|(qk, a)| qk * a.ln()).sum::<f64>();
    let kl = q
        .probs()
        .iter()
        .zip(prior)
        .map(|(qk, pk)| qk * (qk / pk).ln())
        .sum::<f64>();
    Ok((lhs, expected_log - kl))
}
