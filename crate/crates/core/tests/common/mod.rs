//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcc::autodiff::DenseArray;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding; best inertia over `restarts`.
pub fn kmeans(x: &DenseArray, k: usize, restarts: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.rows();
    let mut best = (f64::INFINITY, vec![0; n]);
    for _ in 0..restarts {
        let mut centers: Vec<Vec<f64>> = vec![x.row(rng.random_range(0..n)).to_vec()];
        while centers.len() < k {
            let d: Vec<f64> = (0..n)
                .map(|i| centers.iter().map(|c| sq_dist(x.row(i), c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = d.iter().sum();
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, di) in d.iter().enumerate() {
                target -= di;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            centers.push(x.row(pick).to_vec());
        }
        let mut labels = vec![0; n];
        for _ in 0..300 {
            let mut changed = false;
            for (i, label) in labels.iter_mut().enumerate() {
                let mut bi = 0;
                for c in 1..k {
                    if sq_dist(x.row(i), &centers[c]) < sq_dist(x.row(i), &centers[bi]) {
                        bi = c;
                    }
                }
                changed |= *label != bi;
                *label = bi;
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                if members.is_empty() {
                    continue;
                }
                for (j, v) in center.iter_mut().enumerate() {
                    *v = members.iter().map(|&i| x.get(i, j)).sum::<f64>() / members.len() as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n).map(|i| sq_dist(x.row(i), &centers[labels[i]])).sum();
        if inertia < best.0 {
            best = (inertia, labels);
        }
    }
    best.1
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Maximum agreement over every relabeling of the predictions.
pub fn brute_force_acc(pred: &[usize], truth: &[usize]) -> f64 {
    let k = pred.iter().chain(truth).max().map_or(0, |m| m + 1);
    permutations(k)
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|(p, t)| perm[**p] == **t).count())
        .max()
        .unwrap_or(0) as f64
        / pred.len() as f64
}

fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|c| labels.iter().filter(|&&l| l == c).count() as f64 / n)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// `I(U;V) / ((H(U) + H(V)) / 2)` from the joint and marginal frequencies.
pub fn nmi_formula(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let mut mi = 0.0;
    for a in 0..kp {
        let pa = pred.iter().filter(|&&p| p == a).count() as f64 / n;
        for b in 0..kt {
            let pb = truth.iter().filter(|&&t| t == b).count() as f64 / n;
            let pab = pred.iter().zip(truth).filter(|(p, t)| **p == a && **t == b).count() as f64 / n;
            if pab > 0.0 {
                mi += pab * (pab / (pa * pb)).ln();
            }
        }
    }
    mi / (0.5 * (entropy(pred) + entropy(truth)))
}

/// Adjusted Rand index from an explicit walk over every pair of points.
pub fn ari_by_pairs(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len();
    let (mut both, mut same_p, mut same_t, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sp = pred[i] == pred[j];
            let st = truth[i] == truth[j];
            both += (sp && st) as u8 as f64;
            same_p += sp as u8 as f64;
            same_t += st as u8 as f64;
            total += 1.0;
        }
    }
    let expected = same_p * same_t / total;
    (both - expected) / (0.5 * (same_p + same_t) - expected)
}

pub fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

pub fn shuffled(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}
