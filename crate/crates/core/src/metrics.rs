//! External clustering scores and the self-sharpening assignment diagnostic.
//!
//! The diagnostic is tracked during training only; nothing optimizes it.

use crate::error::{Error, Result};

/// Predicted and true labels for the same `N` points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPartition {
    predicted: Vec<usize>,
    truth: Vec<usize>,
}

impl LabeledPartition {
    pub fn new(predicted: Vec<usize>, truth: Vec<usize>) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::LengthMismatch {
                predicted: predicted.len(),
                truth: truth.len(),
            });
        }
        Ok(Self { predicted, truth })
    }

    pub fn predicted(&self) -> &[usize] {
        &self.predicted
    }

    pub fn truth(&self) -> &[usize] {
        &self.truth
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn contingency(&self) -> ContingencyTable {
        ContingencyTable::from_labels(&self.predicted, &self.truth)
    }
}

/// `K_pred × K_true` co-occurrence counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
}

impl ContingencyTable {
    pub fn from_labels(predicted: &[usize], truth: &[usize]) -> Self {
        let rows = predicted.iter().max().map_or(0, |m| m + 1);
        let cols = truth.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![0u64; rows * cols];
        for (&p, &t) in predicted.iter().zip(truth) {
            counts[p * cols + t] += 1;
        }
        Self { rows, cols, counts }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, p: usize, t: usize) -> u64 {
        self.counts[p * self.cols + t]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// True when each used label on either side meets exactly one label
    /// on the other, i.e. the two labelings agree up to renaming.
    pub fn is_relabeling(&self) -> bool {
        let nonzero = |it: &mut dyn Iterator<Item = u64>| it.filter(|&c| c > 0).count();
        (0..self.rows).all(|p| nonzero(&mut (0..self.cols).map(|t| self.get(p, t))) <= 1)
            && (0..self.cols).all(|t| nonzero(&mut (0..self.rows).map(|p| self.get(p, t))) <= 1)
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.rows)
            .map(|p| (0..self.cols).map(|t| self.get(p, t)).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols)
            .map(|t| (0..self.rows).map(|p| self.get(p, t)).sum())
            .collect()
    }
}

/// Best matched fraction over one-to-one maps from predicted to true labels.
pub fn acc(partition: &LabeledPartition) -> f64 {
    if partition.is_empty() {
        return 0.0;
    }
    let table = partition.contingency();
    let n = table.rows().max(table.cols());
    let mut cost = vec![vec![0i64; n]; n];
    for (p, row) in cost.iter_mut().enumerate().take(table.rows()) {
        for (t, c) in row.iter_mut().enumerate().take(table.cols()) {
            *c = -(table.get(p, t) as i64);
        }
    }
    let assignment = hungarian(&cost);
    let matched: i64 = assignment.iter().enumerate().map(|(r, &c)| -cost[r][c]).sum();
    matched as f64 / partition.len() as f64
}

/// Minimum-cost perfect matching on a square matrix; returns the column
/// assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials formulation; column 0 is a sentinel.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[col_owner[j] - 1] = j - 1;
    }
    out
}

fn entropy_of_counts(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the two label
/// entropies. Two single-cluster labelings score 0.
pub fn nmi(partition: &LabeledPartition) -> f64 {
    if partition.is_empty() {
        return 0.0;
    }
    let table = partition.contingency();
    if table.is_relabeling() {
        return 1.0;
    }
    let n = table.total() as f64;
    let (rs, cs) = (table.row_sums(), table.col_sums());
    let mut mi = 0.0;
    for (p, &r) in rs.iter().enumerate() {
        for (t, &c) in cs.iter().enumerate() {
            let nij = table.get(p, t);
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (r as f64 * c as f64)).ln();
            }
        }
    }
    let (hp, ht) = (entropy_of_counts(&rs, n), entropy_of_counts(&cs, n));
    let denom = 0.5 * (hp + ht);
    if denom <= 0.0 {
        return 0.0;
    }
    (mi / denom).clamp(0.0, 1.0)
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Pair-counting Rand index adjusted for chance.
pub fn ari(partition: &LabeledPartition) -> f64 {
    let table = partition.contingency();
    if table.is_relabeling() {
        return 1.0;
    }
    let n = table.total();
    let index: f64 = table.counts.iter().map(|&c| pairs(c)).sum();
    let a: f64 = table.row_sums().into_iter().map(pairs).sum();
    let b: f64 = table.col_sums().into_iter().map(pairs).sum();
    let total = pairs(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if max == expected {
        // Both labelings trivial in the same way.
        return if index == expected { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// `KL(target ‖ π)` averaged over the batch, where the target sharpens π:
/// `t_ik ∝ π_ik² / f_k` with `f_k = Σ_i π_ik`.
///
/// Rows may be [`AssignmentDistribution`]s or any probability vectors,
/// including exact one-hots.
pub fn dec_diagnostic<P: AsRef<[f64]>>(assignments: &[P]) -> Result<f64> {
    let first = assignments.first().ok_or(Error::CountMismatch {
        expected: 1,
        actual: 0,
    })?;
    let k = first.as_ref().len();
    let mut freq = vec![0.0; k];
    for a in assignments {
        let a = a.as_ref();
        if a.len() != k {
            return Err(Error::CountMismatch {
                expected: k,
                actual: a.len(),
            });
        }
        for (f, p) in freq.iter_mut().zip(a) {
            *f += p;
        }
    }
    let mut total = 0.0;
    for a in assignments {
        let a = a.as_ref();
        let raw: Vec<f64> = a
            .iter()
            .zip(&freq)
            .map(|(p, f)| if *f > 0.0 { p * p / f } else { 0.0 })
            .collect();
        let z: f64 = raw.iter().sum();
        for (r, p) in raw.iter().zip(a) {
            let t = r / z;
            if t > 0.0 {
                total += t * (t / p).ln();
            }
        }
    }
    Ok((total / assignments.len() as f64).max(0.0))
}
