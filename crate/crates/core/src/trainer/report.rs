use serde::{Deserialize, Serialize};

/// What one optimizer step did.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    /// Weight actually applied to `l1` in `total`.
    pub alpha: f64,
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
    pub mean_kl: f64,
    /// Mean entropy of the batch assignment distributions.
    pub mean_entropy: f64,
    /// Argmax counts of the batch assignments.
    pub histogram: Vec<usize>,
    pub dec: f64,
    pub seconds: f64,
}

/// Running sums over the epoch in progress.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochAccumulator {
    pub steps: u64,
    pub l1_sum: f64,
    pub l1_steps: u64,
    pub l2_sum: f64,
    pub l2_steps: u64,
    pub kl_sum: f64,
    pub entropy_sum: f64,
    pub dec_sum: f64,
}

impl EpochAccumulator {
    /// Adds a step. Steps with `alpha == 0` or `alpha == 1` contribute only
    /// to the loss they optimized when `partial` is set.
    pub fn add(&mut self, r: &StepReport, partial: bool) {
        self.steps += 1;
        if !partial || r.alpha > 0.0 {
            self.l1_sum += r.l1;
            self.l1_steps += 1;
        }
        if !partial || r.alpha < 1.0 {
            self.l2_sum += r.l2;
            self.l2_steps += 1;
            self.kl_sum += r.mean_kl;
            self.entropy_sum += r.mean_entropy;
            self.dec_sum += r.dec;
        }
    }

    fn mean(sum: f64, n: u64) -> f64 {
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn l1(&self) -> f64 {
        Self::mean(self.l1_sum, self.l1_steps)
    }

    pub fn l2(&self) -> f64 {
        Self::mean(self.l2_sum, self.l2_steps)
    }

    pub fn kl(&self) -> f64 {
        Self::mean(self.kl_sum, self.l2_steps)
    }

    pub fn entropy(&self) -> f64 {
        Self::mean(self.entropy_sum, self.l2_steps)
    }

    pub fn dec(&self) -> f64 {
        Self::mean(self.dec_sum, self.l2_steps)
    }
}

/// Partition scores against known labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Per-epoch aggregate, one metrics CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    /// 1-based epoch number.
    pub epoch: u64,
    pub steps: u64,
    pub l1: f64,
    pub l2: f64,
    /// `alpha·l1 + (1 − alpha)·l2` of the epoch means.
    pub total: f64,
    pub kl: f64,
    pub entropy: f64,
    /// Mean per-step diagnostic on training batches.
    pub dec: f64,
    /// The same diagnostic on the whole dataset without augmentation.
    pub dec_full: f64,
    /// Argmax histogram of the whole dataset without augmentation.
    pub histogram: Vec<usize>,
    /// Entropy of the normalized `histogram`.
    pub histogram_entropy: f64,
    pub scores: Option<Scores>,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,l1,l2,total,kl,entropy,dec,dec_full,hist_entropy,acc,nmi,ari";

impl EpochReport {
    /// A metrics CSV row. Wall time is left out so that identical runs
    /// produce identical files.
    pub fn csv_row(&self) -> String {
        let (acc, nmi, ari) = match self.scores {
            Some(s) => (s.acc.to_string(), s.nmi.to_string(), s.ari.to_string()),
            None => Default::default(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{acc},{nmi},{ari}",
            self.epoch,
            self.l1,
            self.l2,
            self.total,
            self.kl,
            self.entropy,
            self.dec,
            self.dec_full,
            self.histogram_entropy
        )
    }
}

/// Entropy (nats) of the empirical distribution given by `counts`.
pub fn histogram_entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}
