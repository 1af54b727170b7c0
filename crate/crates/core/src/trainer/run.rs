use std::time::Instant;

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::report::{histogram_entropy, EpochReport, Scores, StepReport};
use super::state::TrainState;
use super::step::{train_step_mode, StepMode};
use crate::data::{AugmentPolicy, Dataset};
use crate::error::{Error, Result};
use crate::encoder::EncoderWeights;
use crate::metrics::{acc, ari, dec_diagnostic, nmi, LabeledPartition};
use crate::rng::{stream_rng, Stream};

/// The current model scored on the whole dataset without augmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub labels: Vec<usize>,
    pub histogram: Vec<usize>,
    pub dec: f64,
    pub scores: Option<Scores>,
}

/// Result of [`Trainer::next_step`].
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub step: StepReport,
    /// Present when the step closed an epoch.
    pub epoch: Option<EpochReport>,
}

/// Drives training over a dataset: shuffling, batching, epoch reports and
/// the stopping rule.
pub struct Trainer<'a> {
    state: TrainState,
    dataset: &'a Dataset,
    policy: AugmentPolicy,
    epoch_seconds: f64,
}

impl<'a> Trainer<'a> {
    /// A fresh run. Queue and batch sizes left on `auto` are resolved
    /// against the dataset size.
    pub fn new(config: &TrainConfig, dataset: &'a Dataset) -> Result<Self> {
        let resolved = config.resolve(dataset.len())?;
        let state = TrainState::new(&resolved, dataset.dim())?;
        Self::resume(state, dataset)
    }

    /// Continues from a saved state.
    pub fn resume(state: TrainState, dataset: &'a Dataset) -> Result<Self> {
        if state.encoder.config.input_dim != dataset.dim() {
            return Err(Error::shape(
                "dataset width",
                &[state.encoder.config.input_dim],
                &[dataset.dim()],
            ));
        }
        if dataset.len() < state.batch_size() {
            return Err(Error::Config(format!(
                "dataset has {} points, fewer than batch_size {}",
                dataset.len(),
                state.batch_size()
            )));
        }
        let policy = state.config.augment_policy(dataset.feature_std())?;
        Ok(Self {
            state,
            dataset,
            policy,
            epoch_seconds: 0.0,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn policy(&self) -> &AugmentPolicy {
        &self.policy
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.dataset.len() / self.state.batch_size()
    }

    fn steps_per_epoch(&self) -> usize {
        self.batches_per_epoch() + usize::from(self.state.config.alternating)
    }

    pub fn is_finished(&self) -> bool {
        self.state.converged || self.state.counters.epoch >= self.state.config.max_epochs as u64
    }

    /// Visiting order of the data in `epoch`.
    pub fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.dataset.len()).collect();
        order.shuffle(&mut stream_rng(self.state.config.seed, Stream::Shuffle, epoch));
        order
    }

    /// Runs the next optimizer step; the trailing partial batch of every
    /// epoch is dropped.
    pub fn next_step(&mut self) -> Result<StepOutcome> {
        if self.is_finished() {
            return Err(Error::Config("training already finished".into()));
        }
        let counters = self.state.counters;
        let bi = counters.batch_in_epoch as usize;
        let b = self.state.batch_size();
        let nb = self.batches_per_epoch();
        let (report, partial) = if bi < nb {
            let order = self.epoch_order(counters.epoch);
            let batch = self.dataset.gather(&order[bi * b..(bi + 1) * b]);
            let mode = if self.state.config.alternating {
                StepMode::InstanceOnly
            } else {
                StepMode::Joint
            };
            (train_step_mode(&mut self.state, &batch, &self.policy, mode)?, self.state.config.alternating)
        } else {
            let all = self.dataset.x().clone();
            (train_step_mode(&mut self.state, &all, &self.policy, StepMode::ClusterOnly)?, true)
        };
        self.state.epoch_acc.add(&report, partial);
        self.epoch_seconds += report.seconds;
        self.state.counters.batch_in_epoch += 1;
        let epoch = if self.state.counters.batch_in_epoch as usize == self.steps_per_epoch() {
            Some(self.finish_epoch()?)
        } else {
            None
        };
        Ok(StepOutcome { step: report, epoch })
    }

    /// Runs to the end of the current epoch.
    pub fn run_epoch(&mut self) -> Result<EpochReport> {
        loop {
            if let Some(e) = self.next_step()?.epoch {
                return Ok(e);
            }
        }
    }

    /// Trains until `max_epochs` or convergence, calling `on_epoch` after
    /// each epoch.
    pub fn run<F>(&mut self, mut on_epoch: F) -> Result<()>
    where
        F: FnMut(&EpochReport, &TrainState) -> Result<()>,
    {
        while !self.is_finished() {
            let report = self.run_epoch()?;
            on_epoch(&report, &self.state)?;
        }
        Ok(())
    }

    /// Scores the current model on the whole dataset without augmentation.
    pub fn evaluate(&self) -> Result<Evaluation> {
        let assignments = self.state.encoder.assign_batch(self.dataset.x())?;
        let labels: Vec<usize> = assignments.iter().map(|a| a.argmax()).collect();
        let dec = dec_diagnostic(&assignments)?;
        let mut histogram = vec![0usize; self.state.config.clusters];
        for &l in &labels {
            histogram[l] += 1;
        }
        let scores = match self.dataset.labels() {
            Some(truth) => {
                let p = LabeledPartition::new(labels.clone(), truth.to_vec())?;
                Some(Scores {
                    acc: acc(&p),
                    nmi: nmi(&p),
                    ari: ari(&p),
                })
            }
            None => None,
        };
        Ok(Evaluation {
            labels,
            histogram,
            dec,
            scores,
        })
    }

    fn finish_epoch(&mut self) -> Result<EpochReport> {
        let start = Instant::now();
        let acc = std::mem::take(&mut self.state.epoch_acc);
        let eval = self.evaluate()?;
        let alpha = self.state.config.alpha;
        let (l1, l2) = (acc.l1(), acc.l2());
        let total = alpha * l1 + (1.0 - alpha) * l2;
        self.state.counters.epoch += 1;
        self.state.counters.batch_in_epoch = 0;
        self.state.loss_history.push(total);
        self.state.converged = has_converged(
            &self.state.loss_history,
            self.state.config.convergence_window,
            self.state.config.convergence_tol,
        );
        let seconds = std::mem::take(&mut self.epoch_seconds) + start.elapsed().as_secs_f64();
        Ok(EpochReport {
            epoch: self.state.counters.epoch,
            steps: acc.steps,
            l1,
            l2,
            total,
            kl: acc.kl(),
            entropy: acc.entropy(),
            dec: acc.dec(),
            dec_full: eval.dec,
            histogram_entropy: histogram_entropy(&eval.histogram),
            histogram: eval.histogram,
            scores: eval.scores,
            seconds,
        })
    }
}

/// True once the moving average of the last `window` losses moved by less
/// than `tol` relative to the previous window's average.
pub fn has_converged(history: &[f64], window: usize, tol: f64) -> bool {
    if tol <= 0.0 || window == 0 || history.len() <= window {
        return false;
    }
    let n = history.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let now = mean(&history[n - window..]);
    let prev = mean(&history[n - window - 1..n - 1]);
    (now - prev).abs() / prev.abs().max(f64::MIN_POSITIVE) < tol
}

/// Trains from scratch and returns the final state with every epoch report.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<(TrainState, Vec<EpochReport>)> {
    let mut trainer = Trainer::new(config, dataset)?;
    let mut reports = Vec::new();
    trainer.run(|r, _| {
        reports.push(r.clone());
        Ok(())
    })?;
    Ok((trainer.into_state(), reports))
}
