//! Desk-scale datasets, element-level augmentation and CSV I/O.

mod augment;
mod csv;
mod generators;

use std::path::PathBuf;

pub use augment::{augment, AugmentMode, AugmentPolicy};
pub use csv::{load_csv, parse_csv, save_csv, write_csv};
pub use generators::{blob_centers, blobs, blobs_nd, rings, two_moons};

use crate::autodiff::DenseArray;
use crate::error::{Error, Result};

/// `N × d_x` points with optional integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    x: DenseArray,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: DenseArray, labels: Option<Vec<usize>>) -> Result<Self> {
        if x.shape().len() != 2 {
            return Err(Error::shape("dataset", x.shape(), &[0, 0]));
        }
        if !x.is_finite() {
            return Err(Error::NonFiniteInput {
                context: "dataset".into(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(Error::LengthMismatch {
                    predicted: x.rows(),
                    truth: l.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            x,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &DenseArray {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct true classes (`max label + 1`).
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Rows at `indices` as a `len × d_x` matrix.
    pub fn gather(&self, indices: &[usize]) -> DenseArray {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DenseArray::matrix(indices.len(), d, data).expect("gather shape")
    }

    /// Mean over columns of the per-column standard deviation.
    pub fn feature_std(&self) -> f64 {
        let (n, d) = (self.len(), self.dim());
        if n == 0 || d == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for j in 0..d {
            let mean = (0..n).map(|i| self.x.row(i)[j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (self.x.row(i)[j] - mean).powi(2)).sum::<f64>() / n as f64;
            total += var.sqrt();
        }
        total / d as f64
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }
}

/// A dataset selector as written on the command line.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    TwoMoons,
    Blobs,
    Rings,
    Csv(PathBuf),
}

impl std::str::FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_moons" => Ok(Self::TwoMoons),
            "blobs" => Ok(Self::Blobs),
            "rings" => Ok(Self::Rings),
            _ => match s.strip_prefix("csv:") {
                Some(p) if !p.is_empty() => Ok(Self::Csv(PathBuf::from(p))),
                _ => Err(Error::Config(format!(
                    "unknown dataset `{s}` (expected two_moons, blobs, rings or csv:<path>)"
                ))),
            },
        }
    }
}

/// Generator knobs shared by the synthetic datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub n: usize,
    pub classes: usize,
    pub noise: f64,
    pub spread: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n: 2000,
            classes: 2,
            noise: 0.05,
            spread: 10.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn load(&self, p: &GeneratorParams) -> Result<Dataset> {
        match self {
            Self::TwoMoons => two_moons(p.n, p.noise, p.seed),
            Self::Blobs => blobs(p.n, p.classes, p.spread, p.noise, p.seed),
            Self::Rings => {
                let radii: Vec<f64> = (1..=p.classes).map(|r| r as f64).collect();
                rings(p.n, &radii, p.noise, p.seed)
            }
            Self::Csv(path) => load_csv(path),
        }
    }
}
