mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tcc::autodiff::{dot, l2_norm, DenseArray, Graph};
use tcc::cluster::aggregate_all;
use tcc::data::{blobs, AugmentPolicy};
use tcc::metrics::{acc, LabeledPartition};
use tcc::queue::{ClusterQueue, InstanceQueue};
use tcc::rng::Stream;
use tcc::trainer::augment_batch;

fn reps(features: &DenseArray, pi: &DenseArray) -> DenseArray {
    let mut g = Graph::new();
    let f = g.constant(features.clone()).unwrap();
    let p = g.constant(pi.clone()).unwrap();
    let r = aggregate_all(&mut g, f, p).unwrap();
    g.value(r).clone()
}

fn near_uniform(rng: &mut impl Rng, rows: usize, k: usize) -> DenseArray {
    let data = (0..rows)
        .flat_map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| 1.0 + 0.05 * rng.random::<f64>()).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(move |v| v / z)
        })
        .collect();
    DenseArray::matrix(rows, k, data).unwrap()
}

#[test]
fn disjoint_halves_of_one_blob_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let center = [2.0, -1.0, 0.5, 1.5];
    for _ in 0..20 {
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|_| center.iter().map(|c| c + noise.sample(&mut rng)).collect())
            .collect();
        let (a, b) = rows.split_at(32);
        let ra = reps(&DenseArray::from_rows(a).unwrap(), &near_uniform(&mut rng, 32, 3));
        let rb = reps(&DenseArray::from_rows(b).unwrap(), &near_uniform(&mut rng, 32, 3));
        for k in 0..3 {
            assert!(dot(ra.row(k), rb.row(k)) > 0.99);
        }
    }
}

#[test]
fn low_weight_outlier_barely_moves_a_representation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let majority: Vec<Vec<f64>> = (0..16)
            .map(|_| vec![3.0 + rng.random::<f64>(), 1.0 + rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let outlier = vec![-40.0 * rng.random::<f64>(), 25.0, -30.0];
        let weights: Vec<f64> = (0..16).map(|_| 0.5 + 0.5 * rng.random::<f64>()).collect();
        let sum: Vec<f64> = (0..3)
            .map(|j| majority.iter().zip(&weights).map(|(r, w)| w * r[j]).sum())
            .collect();
        for delta in [1e-2, 1e-4, 1e-6] {
            let pi_of = |extra: Option<f64>| {
                let mut col = weights.clone();
                col.extend(extra);
                DenseArray::matrix(col.len(), 1, col).unwrap()
            };
            let base = reps(&DenseArray::from_rows(&majority).unwrap(), &pi_of(None));
            let mut with = majority.clone();
            with.push(outlier.clone());
            let moved = reps(&DenseArray::from_rows(&with).unwrap(), &pi_of(Some(delta)));
            let angle = dot(base.row(0), moved.row(0)).clamp(-1.0, 1.0).acos();
            let bound = 2.0 * delta * l2_norm(&outlier) / l2_norm(&sum);
            assert!(angle < bound, "δ={delta}: angle {angle} vs bound {bound}");
        }
    }
}

#[test]
fn queues_survive_serialization() {
    let mut p = ClusterQueue::new(6, 3, 2).unwrap();
    let mut q = InstanceQueue::new(4, 2);
    for t in 0..5 {
        let a = t as f64;
        let round = DenseArray::from_rows(&[[a.cos(), a.sin()], [a.sin(), -a.cos()], [1.0, 0.0]]).unwrap();
        p.push_clusters(&round).unwrap();
        q.push_instances(&round).unwrap();
    }
    let p2: ClusterQueue = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    let q2: InstanceQueue = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
    assert_eq!(p2, p);
    assert_eq!(q2, q);
    assert_eq!(q.len(), 4);
}

#[test]
fn augmentation_keeps_blob_semantics() {
    let data = blobs(2048, 4, 10.0, 0.5, 0).unwrap();
    let policy = AugmentPolicy::vector(data.feature_std());
    let augmented = augment_batch(data.x(), &policy, 0, Stream::AugmentOnline, 0).unwrap();
    let truth = data.labels().unwrap().to_vec();
    let clean = common::kmeans(data.x(), 4, 10, 1);
    let noisy = common::kmeans(&augmented, 4, 10, 1);
    let clean_acc = acc(&LabeledPartition::new(clean, truth.clone()).unwrap());
    let noisy_acc = acc(&LabeledPartition::new(noisy, truth).unwrap());
    assert!(clean_acc >= 0.98, "clean {clean_acc}");
    assert!((clean_acc - noisy_acc).abs() < 0.05, "clean {clean_acc} augmented {noisy_acc}");
}
