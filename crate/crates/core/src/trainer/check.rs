use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::TrainConfig;
use super::step::combined_loss;
use crate::autodiff::{check_gradient, l2_norm, DenseArray, GradCheckReport, Graph, OpKind, ParameterStore, Var};
use crate::cluster::{aggregate_all, cluster_loss};
use crate::encoder::{Encoder, EncoderWeights, MomentumEncoder};
use crate::error::Result;
use crate::instance::{gumbel_noise, instance_loss, momentum_embeddings, InstanceBranch};
use crate::queue::{ClusterQueue, InstanceQueue};
use crate::rng::{stream_rng, Stream};

/// The three training objectives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Cluster,
    Instance,
    Combined,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Cluster, LossKind::Instance, LossKind::Combined];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Cluster => "cluster",
            LossKind::Instance => "instance",
            LossKind::Combined => "combined",
        }
    }
}

/// A frozen random training situation: model, batch, queues and noise.
pub struct CheckFixture {
    pub config: TrainConfig,
    pub encoder: Encoder,
    pub batch: DenseArray,
    momentum_reps: DenseArray,
    positives: Vec<DenseArray>,
    noise: Vec<DenseArray>,
    cluster_queue: ClusterQueue,
    instance_queue: InstanceQueue,
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = l2_norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

impl CheckFixture {
    /// Builds a fixture for `config` on a random `batch × input_dim` batch.
    /// The momentum encoder is a perturbed copy so positives differ from
    /// the online outputs, and both queues are partially filled.
    pub fn new(config: &TrainConfig, input_dim: usize, batch: usize, seed: u64) -> Result<Self> {
        let mut config = config.clone();
        config.seed = seed;
        let enc_cfg = config.encoder_config(input_dim);
        let mut rng = stream_rng(seed, Stream::Check, 0);
        let encoder = Encoder::init(enc_cfg, &mut rng)?;
        let mut momentum = MomentumEncoder::from_online(&encoder);
        for w in momentum.weights.values_mut() {
            for v in w.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += 0.05 * z;
            }
        }
        let data = (0..batch * input_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let batch_x = DenseArray::matrix(batch, input_dim, data)?;
        let (k, d) = (config.clusters, config.feature_dim);

        let samples = config.gumbel_samples;
        let noise: Vec<DenseArray> = (0..samples).map(|_| gumbel_noise(&mut rng, batch, k)).collect();
        let mnoise: Vec<DenseArray> = (0..samples).map(|_| gumbel_noise(&mut rng, batch, k)).collect();
        let mut mg = Graph::new();
        let menc = momentum.bind(&mut mg)?;
        let xv = mg.constant(batch_x.clone())?;
        let f = menc.features(&mut mg, xv)?;
        let logits = menc.logits(&mut mg, f)?;
        let probs = mg.softmax(logits)?;
        let log_probs = mg.log_softmax(logits)?;
        let (positives, _) = momentum_embeddings(&mut mg, &menc, f, log_probs, &mnoise, config.lambda)?;
        let r = aggregate_all(&mut mg, f, probs)?;
        let momentum_reps = mg.value(r).clone();

        let mut cluster_queue = ClusterQueue::new(4 * k, k, d)?;
        for _ in 0..3 {
            let rows: Vec<Vec<f64>> = (0..k).map(|_| random_unit(&mut rng, d)).collect();
            cluster_queue.push_clusters(&DenseArray::from_rows(&rows)?)?;
        }
        let mut instance_queue = InstanceQueue::new(3 * batch, d);
        let rows: Vec<Vec<f64>> = (0..2 * batch).map(|_| random_unit(&mut rng, d)).collect();
        instance_queue.push_instances(&DenseArray::from_rows(&rows)?)?;

        Ok(Self {
            config,
            encoder,
            batch: batch_x,
            momentum_reps,
            positives,
            noise,
            cluster_queue,
            instance_queue,
        })
    }

    /// Builds loss `kind` on `g` with the weights in `params`.
    pub fn build(&self, g: &mut Graph, params: &ParameterStore, kind: LossKind) -> Result<Var> {
        let enc = Encoder::from_params(self.encoder.config.clone(), params.clone())?;
        let bound = enc.bind(g)?;
        let xv = g.constant(self.batch.clone())?;
        let f = bound.features(g, xv)?;
        let logits = bound.logits(g, f)?;
        let probs = g.softmax(logits)?;
        let log_probs = g.log_softmax(logits)?;
        let cluster = |g: &mut Graph| -> Result<Var> {
            let r = aggregate_all(g, f, probs)?;
            cluster_loss(g, r, &self.momentum_reps, &self.cluster_queue, self.config.tau)
        };
        let instance = |g: &mut Graph| -> Result<Var> {
            let branch = InstanceBranch {
                encoder: &bound,
                features: f,
                probs,
                log_probs,
            };
            Ok(instance_loss(
                g,
                &branch,
                &self.noise,
                &self.positives,
                &self.instance_queue,
                self.config.tau,
                self.config.lambda,
            )?
            .loss)
        };
        match kind {
            LossKind::Cluster => cluster(g),
            LossKind::Instance => instance(g),
            LossKind::Combined => {
                let a = cluster(g)?;
                let b = instance(g)?;
                combined_loss(g, a, b, self.config.alpha)
            }
        }
    }

    /// Finite-difference check of one loss over every encoder parameter.
    /// `fault` corrupts the backward rule of one operation kind.
    pub fn check(&self, kind: LossKind, eps: f64, fault: Option<OpKind>) -> Result<GradCheckReport> {
        check_gradient(&self.encoder.params, eps, |g, params| {
            if let Some(op) = fault {
                g.inject_backward_fault(op);
            }
            self.build(g, params, kind)
        })
    }
}
