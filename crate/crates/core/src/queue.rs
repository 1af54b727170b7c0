//! Fixed-capacity FIFO memory queues of unit vectors used as negatives.

use serde::{Deserialize, Serialize};

use crate::autodiff::{l2_norm, DenseArray};
use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

/// Ring buffer of `dim`-wide unit vectors. Slot `l` is a physical
/// position; writes start at slot 0 and wrap around.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingQueue {
    capacity: usize,
    dim: usize,
    storage: Vec<f64>,
    len: usize,
    cursor: usize,
}

impl RingQueue {
    pub fn new(capacity: usize, dim: usize) -> Self {
        Self {
            capacity,
            dim,
            storage: Vec::with_capacity(capacity * dim),
            len: 0,
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Next slot to be written.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn slot(&self, l: usize) -> &[f64] {
        &self.storage[l * self.dim..(l + 1) * self.dim]
    }

    /// Appends one vector, evicting the oldest entry when full.
    pub fn push(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::shape("queue push", &[self.dim], &[v.len()]));
        }
        let norm = l2_norm(v);
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnitNorm(norm));
        }
        if self.capacity == 0 {
            return Ok(());
        }
        if self.len < self.capacity {
            self.storage.extend_from_slice(v);
            self.len += 1;
        } else {
            let c = self.cursor;
            self.storage[c * self.dim..(c + 1) * self.dim].copy_from_slice(v);
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Stored vectors as a `len × dim` matrix in slot order.
    pub fn as_matrix(&self) -> DenseArray {
        DenseArray::matrix(self.len, self.dim, self.storage.clone()).expect("queue shape")
    }

    /// Stored vectors from oldest to newest.
    pub fn chronological(&self) -> Vec<&[f64]> {
        let start = if self.len < self.capacity { 0 } else { self.cursor };
        (0..self.len)
            .map(|i| self.slot((start + i) % self.len.max(1)))
            .collect()
    }
}

/// The cluster-level queue `P`. Representations are always pushed in
/// cluster order `0..K` and the capacity is a multiple of `K`, so slot `l`
/// always holds a representation of cluster `l mod K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterQueue {
    ring: RingQueue,
    clusters: usize,
}

impl ClusterQueue {
    pub fn new(capacity: usize, clusters: usize, dim: usize) -> Result<Self> {
        if clusters == 0 {
            return Err(Error::EmptyModel);
        }
        if !capacity.is_multiple_of(clusters) {
            return Err(Error::Config(format!(
                "cluster queue capacity {capacity} is not a multiple of K={clusters}"
            )));
        }
        Ok(Self {
            ring: RingQueue::new(capacity, dim),
            clusters,
        })
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn ring(&self) -> &RingQueue {
        &self.ring
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.ring.capacity()
    }

    /// Cluster whose representation occupies slot `l`.
    pub fn slot_cluster(&self, l: usize) -> usize {
        l % self.clusters
    }

    /// Pushes one representation per cluster, in cluster order.
    pub fn push_clusters(&mut self, reps: &DenseArray) -> Result<()> {
        if reps.rows() != self.clusters || reps.shape().len() != 2 {
            return Err(Error::CountMismatch {
                expected: self.clusters,
                actual: reps.rows(),
            });
        }
        if self.capacity() == 0 {
            return Ok(());
        }
        for k in 0..self.clusters {
            debug_assert_eq!(self.ring.cursor() % self.clusters, k);
            self.ring.push(reps.row(k))?;
        }
        Ok(())
    }

    /// Slots usable as negatives for cluster `k` (`l mod K ≠ k`).
    pub fn negative_mask(&self, k: usize) -> Vec<bool> {
        (0..self.len()).map(|l| self.slot_cluster(l) != k).collect()
    }

    /// Slots excluded for cluster `k`.
    pub fn excluded_slots(&self, k: usize) -> Vec<usize> {
        (0..self.len()).filter(|&l| self.slot_cluster(l) == k).collect()
    }
}

/// The instance-level queue `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceQueue {
    ring: RingQueue,
}

impl InstanceQueue {
    pub fn new(capacity: usize, dim: usize) -> Self {
        Self {
            ring: RingQueue::new(capacity, dim),
        }
    }

    pub fn ring(&self) -> &RingQueue {
        &self.ring
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.ring.capacity()
    }

    /// Appends every row of `embeddings`.
    pub fn push_instances(&mut self, embeddings: &DenseArray) -> Result<()> {
        for i in 0..embeddings.rows() {
            self.ring.push(embeddings.row(i))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i % dim] = 1.0;
        v
    }

    fn round(k: usize, tag: usize) -> DenseArray {
        // Row k is e_{tag*k mod d} so rounds are distinguishable.
        let rows: Vec<Vec<f64>> = (0..k).map(|c| basis(8, tag * 3 + c)).collect();
        DenseArray::from_rows(&rows).unwrap()
    }

    #[test]
    fn fifo_eviction_keeps_last_rounds() {
        let k = 2;
        let mut q = ClusterQueue::new(2 * k, k, 8).unwrap();
        assert_eq!(q.len(), 0);
        for tag in 0..3 {
            q.push_clusters(&round(k, tag)).unwrap();
        }
        assert_eq!(q.len(), 4);
        let chrono: Vec<Vec<f64>> = q.ring().chronological().iter().map(|s| s.to_vec()).collect();
        let expected: Vec<Vec<f64>> = (1..3)
            .flat_map(|tag| (0..k).map(move |c| basis(8, tag * 3 + c)))
            .collect();
        assert_eq!(chrono, expected);
        for l in 0..q.len() {
            assert_eq!(q.slot_cluster(l), l % k);
        }
    }

    #[test]
    fn exclusion_slots_for_k3() {
        let mut q = ClusterQueue::new(20, 10, 8).unwrap();
        q.push_clusters(&round(10, 0)).unwrap();
        q.push_clusters(&round(10, 1)).unwrap();
        assert_eq!(q.excluded_slots(3), vec![3, 13]);
        let mask = q.negative_mask(3);
        assert_eq!(mask.iter().filter(|&&m| !m).count(), 2);
        assert!(!mask[3] && !mask[13]);
    }

    #[test]
    fn capacity_must_divide_by_clusters() {
        assert!(ClusterQueue::new(7, 2, 4).is_err());
        assert!(matches!(ClusterQueue::new(4, 0, 4), Err(Error::EmptyModel)));
    }

    #[test]
    fn count_and_norm_checked() {
        let mut q = ClusterQueue::new(4, 2, 8).unwrap();
        assert!(matches!(
            q.push_clusters(&round(3, 0)),
            Err(Error::CountMismatch { .. })
        ));
        let mut iq = InstanceQueue::new(3, 2);
        let bad = DenseArray::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        assert!(matches!(iq.push_instances(&bad), Err(Error::NotUnitNorm(_))));
    }

    #[test]
    fn instance_queue_respects_capacity() {
        let mut q = InstanceQueue::new(3, 2);
        for i in 0..5 {
            let a = (i as f64) * 0.3;
            let e = DenseArray::matrix(1, 2, vec![a.cos(), a.sin()]).unwrap();
            q.push_instances(&e).unwrap();
            assert!(q.len() <= 3);
        }
        assert_eq!(q.len(), 3);
        let oldest = q.ring().chronological()[0].to_vec();
        assert!((oldest[0] - 0.6f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn zero_capacity_stays_empty() {
        let mut q = ClusterQueue::new(0, 2, 8).unwrap();
        q.push_clusters(&round(2, 0)).unwrap();
        assert!(q.is_empty());
    }
}
