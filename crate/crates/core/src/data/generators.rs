use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::autodiff::DenseArray;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

fn noise_dist(sigma: f64) -> Result<Normal<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
    }
    Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))
}

/// Shuffles rows and labels together with the dataset's own stream.
fn finish(name: &str, mut rows: Vec<(Vec<f64>, usize)>, dim: usize, seed: u64) -> Result<Dataset> {
    rows.shuffle(&mut stream_rng(seed, Stream::Data, 1));
    let labels = rows.iter().map(|(_, l)| *l).collect();
    let data = rows.into_iter().flat_map(|(x, _)| x).collect::<Vec<_>>();
    let n = data.len() / dim.max(1);
    Dataset::new(name, DenseArray::matrix(n, dim, data)?, Some(labels))
}

/// Two interleaved half circles of radius 1: the upper arc centered at the
/// origin (label 0) and the lower arc centered at `(1, 0.5)` (label 1).
pub fn two_moons(n: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Config(format!("two_moons needs an even, positive n, got {n}")));
    }
    let dist = noise_dist(noise_sigma)?;
    let mut rng = stream_rng(seed, Stream::Data, 0);
    let half = n / 2;
    let step = if half > 1 { PI / (half - 1) as f64 } else { 0.0 };
    let mut rows = Vec::with_capacity(n);
    for i in 0..half {
        let t = step * i as f64;
        rows.push((vec![t.cos(), t.sin()], 0));
    }
    for i in 0..half {
        let t = step * i as f64;
        rows.push((vec![1.0 - t.cos(), 0.5 - t.sin()], 1));
    }
    for (x, _) in rows.iter_mut() {
        for v in x.iter_mut() {
            *v += dist.sample(&mut rng);
        }
    }
    finish("two_moons", rows, 2, seed)
}

/// 2-D isotropic Gaussian blobs; see [`blobs_nd`].
pub fn blobs(n: usize, k: usize, centers_spread: f64, sigma: f64, seed: u64) -> Result<Dataset> {
    blobs_nd(n, k, 2, centers_spread, sigma, seed)
}

/// `k` isotropic Gaussian clusters around centers drawn uniformly from
/// `[−spread, spread]^dim`. Centers are redrawn until every pair is at
/// least `spread / 2` apart when that is achievable in a bounded number of
/// tries. Point `i` belongs to cluster `i mod k`.
pub fn blobs_nd(n: usize, k: usize, dim: usize, centers_spread: f64, sigma: f64, seed: u64) -> Result<Dataset> {
    if k < 2 || dim == 0 || n < k {
        return Err(Error::Config(format!("blobs needs k >= 2, dim >= 1, n >= k (n={n}, k={k}, dim={dim})")));
    }
    if !(centers_spread > 0.0 && centers_spread.is_finite()) {
        return Err(Error::Config(format!("centers_spread must be positive, got {centers_spread}")));
    }
    let dist = noise_dist(sigma)?;
    let centers = blob_centers(k, dim, centers_spread, seed);
    let mut rng = stream_rng(seed, Stream::Data, 0);
    let rows = (0..n)
        .map(|i| {
            let c = &centers[i % k];
            (c.iter().map(|m| m + dist.sample(&mut rng)).collect(), i % k)
        })
        .collect();
    finish("blobs", rows, dim, seed)
}

/// The centers [`blobs_nd`] uses for these parameters.
pub fn blob_centers(k: usize, dim: usize, spread: f64, seed: u64) -> Vec<Vec<f64>> {
    const TRIES: usize = 1000;
    let mut rng = stream_rng(seed, Stream::Data, 2);
    let min_sep = spread / 2.0;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    while centers.len() < k {
        let mut candidate = Vec::new();
        for _ in 0..TRIES {
            candidate = (0..dim).map(|_| rng.random_range(-spread..=spread)).collect();
            let far = centers.iter().all(|c| {
                c.iter().zip(&candidate).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= min_sep
            });
            if far {
                break;
            }
        }
        centers.push(candidate);
    }
    centers
}

/// Concentric noisy circles, one per radius, with uniformly random angles.
/// Point `i` lies on ring `i mod radii.len()`.
pub fn rings(n: usize, radii: &[f64], sigma: f64, seed: u64) -> Result<Dataset> {
    if radii.len() < 2 || n < radii.len() {
        return Err(Error::Config(format!(
            "rings needs at least two radii and n >= radii (n={n}, radii={})",
            radii.len()
        )));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Config(format!("ring radii must be positive, got {radii:?}")));
    }
    let dist = noise_dist(sigma)?;
    let mut rng = stream_rng(seed, Stream::Data, 0);
    let rows = (0..n)
        .map(|i| {
            let label = i % radii.len();
            let t = rng.random_range(0.0..2.0 * PI);
            let r = radii[label];
            let x = vec![r * t.cos() + dist.sample(&mut rng), r * t.sin() + dist.sample(&mut rng)];
            (x, label)
        })
        .collect();
    finish("rings", rows, 2, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(d: &Dataset) -> Vec<usize> {
        let mut c = vec![0; d.num_classes().unwrap()];
        for &l in d.labels().unwrap() {
            c[l] += 1;
        }
        c
    }

    #[test]
    fn moons_lie_on_arcs_without_noise() {
        let d = two_moons(200, 0.0, 3).unwrap();
        for (i, &l) in d.labels().unwrap().iter().enumerate() {
            let p = d.row(i);
            let (cx, cy) = if l == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
            if l == 0 {
                assert!(p[1] >= -1e-12);
            } else {
                assert!(p[1] <= 0.5 + 1e-12);
            }
        }
        assert_eq!(counts(&d), vec![100, 100]);
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(two_moons(100, 0.1, 9).unwrap(), two_moons(100, 0.1, 9).unwrap());
        assert_ne!(two_moons(100, 0.1, 9).unwrap(), two_moons(100, 0.1, 10).unwrap());
        assert_eq!(blobs(90, 3, 5.0, 0.3, 1).unwrap(), blobs(90, 3, 5.0, 0.3, 1).unwrap());
        assert_eq!(rings(90, &[1.0, 2.0], 0.1, 1).unwrap(), rings(90, &[1.0, 2.0], 0.1, 1).unwrap());
        assert!(two_moons(7, 0.1, 0).is_err());
        assert!(two_moons(8, -0.1, 0).is_err());
    }

    #[test]
    fn zero_sigma_blobs_collapse_on_centers() {
        let d = blobs(60, 3, 4.0, 0.0, 5).unwrap();
        let centers = blob_centers(3, 2, 4.0, 5);
        for (i, &l) in d.labels().unwrap().iter().enumerate() {
            assert_eq!(d.row(i), centers[l].as_slice());
        }
        assert_eq!(counts(&d), vec![20, 20, 20]);
    }

    #[test]
    fn blob_means_within_clt_bound() {
        let (n, k, sigma) = (3000, 3, 0.7);
        let d = blobs(n, k, 8.0, sigma, 11).unwrap();
        let centers = blob_centers(k, 2, 8.0, 11);
        let bound = 5.0 * sigma / ((n / k) as f64).sqrt();
        for (c, center) in centers.iter().enumerate() {
            let members: Vec<&[f64]> = (0..n).filter(|&i| d.labels().unwrap()[i] == c).map(|i| d.row(i)).collect();
            for j in 0..2 {
                let mean = members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64;
                assert!((mean - center[j]).abs() < bound);
            }
        }
    }

    #[test]
    fn rings_radius_and_balance() {
        let d = rings(300, &[1.0, 3.0, 5.0], 0.0, 2).unwrap();
        for (i, &l) in d.labels().unwrap().iter().enumerate() {
            let r = d.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - [1.0, 3.0, 5.0][l]).abs() < 1e-12);
        }
        assert_eq!(counts(&d), vec![100, 100, 100]);
        let noisy = rings(3000, &[1.0, 3.0], 0.2, 4).unwrap();
        let bound = 5.0 * 0.2 / (1500f64).sqrt();
        for l in 0..2 {
            let radius: Vec<f64> = (0..3000)
                .filter(|&i| noisy.labels().unwrap()[i] == l)
                .map(|i| noisy.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            let mean = radius.iter().sum::<f64>() / radius.len() as f64;
            // Radial noise has mean ≈ σ²/(2r) outward bias; allow for it.
            assert!((mean - [1.0, 3.0][l]).abs() < bound + 0.2 * 0.2 / (2.0 * [1.0, 3.0][l]));
        }
    }
}
