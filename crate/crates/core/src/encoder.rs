//! The parametric model: feature network, cluster prototypes, assignment
//! inference, the instance head, and the momentum copy of all of them.
//!
//! Feature network: `d_x → hidden… → d_m`, ReLU between layers and no
//! activation on the output. Assignment: `π(k) = softmax_k(μ_kᵀ f(x))`.
//! Instance embedding: `e = normalize(f(x) + W c + b)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{l2_norm, softmax_in_place, DenseArray, Graph, ParameterStore, Var};
use crate::error::{Error, Result};

pub const PROTOTYPES: &str = "prototypes";
pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

pub fn layer_weight(i: usize) -> String {
    format!("layer{i}.weight")
}

pub fn layer_bias(i: usize) -> String {
    format!("layer{i}.bias")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub clusters: usize,
    /// Re-normalize prototype rows on every forward pass.
    #[serde(default)]
    pub normalize_prototypes: bool,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, clusters: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![64, 64],
            feature_dim: 16,
            clusters,
            normalize_prototypes: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::EmptyModel);
        }
        if self.clusters < 2 {
            return Err(Error::Config("at least two clusters are required".into()));
        }
        if self.feature_dim < 2 {
            return Err(Error::Config("feature dimension must be at least 2".into()));
        }
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every feature-network layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.feature_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Every parameter name with its expected shape.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, (fan_in, fan_out)) in self.layer_dims().into_iter().enumerate() {
            out.push((layer_weight(i), vec![fan_in, fan_out]));
            out.push((layer_bias(i), vec![fan_out]));
        }
        out.push((PROTOTYPES.into(), vec![self.clusters, self.feature_dim]));
        out.push((HEAD_WEIGHT.into(), vec![self.clusters, self.feature_dim]));
        out.push((HEAD_BIAS.into(), vec![self.feature_dim]));
        out
    }
}

fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> DenseArray {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    DenseArray::matrix(fan_in, fan_out, data).expect("shape")
}

/// A K-simplex vector of cluster assignment probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentDistribution(Vec<f64>);

impl AsRef<[f64]> for AssignmentDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl AssignmentDistribution {
    /// Validates positivity and unit mass (within 1e-10).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::EmptyModel);
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p.is_nan() || p <= 0.0 || p.is_infinite()) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::Config(format!("not a point on the open simplex: {probs:?}")));
        }
        Ok(Self(probs))
    }

    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let mut p = logits.to_vec();
        softmax_in_place(&mut p);
        // Extreme logit gaps underflow to zero; keep the simplex open.
        for v in &mut p {
            *v = v.max(f64::MIN_POSITIVE);
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        Self::new(p)
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable cluster; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = k;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().map(|&p| p * p.ln()).sum::<f64>()
    }
}

/// Weight handles of one encoder placed on a graph.
#[derive(Clone, Debug)]
pub struct BoundEncoder {
    layers: Vec<(Var, Var)>,
    prototypes: Var,
    head_weight: Var,
    head_bias: Var,
    normalize_prototypes: bool,
}

impl BoundEncoder {
    /// `f(x)` for a batch `x` of shape `B × d_x`.
    pub fn features(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul(h, w)?;
            h = g.add_row(z, b)?;
            if i < last {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Assignment logits `μ_kᵀ f`, shape `B × K`.
    pub fn logits(&self, g: &mut Graph, features: Var) -> Result<Var> {
        let mu = if self.normalize_prototypes {
            g.l2_normalize(self.prototypes)?
        } else {
            self.prototypes
        };
        g.matmul_nt(features, mu)
    }

    /// `normalize(f + c·W + b)` for features `B × d_m` and codes `B × K`.
    pub fn instance_embed(&self, g: &mut Graph, features: Var, codes: Var) -> Result<Var> {
        let projected = g.matmul(codes, self.head_weight)?;
        let shifted = g.add_row(projected, self.head_bias)?;
        let sum = g.add(features, shifted)?;
        g.l2_normalize(sum)
    }
}

/// Anything that can place a full set of encoder weights on a graph.
pub trait EncoderWeights {
    fn config(&self) -> &EncoderConfig;
    fn bind_weight(&self, g: &mut Graph, name: &str) -> Result<Var>;

    fn bind(&self, g: &mut Graph) -> Result<BoundEncoder> {
        let cfg = self.config();
        let layers = (0..cfg.layer_dims().len())
            .map(|i| {
                Ok((
                    self.bind_weight(g, &layer_weight(i))?,
                    self.bind_weight(g, &layer_bias(i))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundEncoder {
            layers,
            prototypes: self.bind_weight(g, PROTOTYPES)?,
            head_weight: self.bind_weight(g, HEAD_WEIGHT)?,
            head_bias: self.bind_weight(g, HEAD_BIAS)?,
            normalize_prototypes: cfg.normalize_prototypes,
        })
    }

    /// Features of a batch, evaluated on a throwaway graph.
    fn features_of(&self, x: &DenseArray) -> Result<DenseArray> {
        let mut g = Graph::new();
        let enc = self.bind(&mut g)?;
        let xv = g.constant(as_batch(x, self.config().input_dim)?)?;
        let f = enc.features(&mut g, xv)?;
        Ok(g.value(f).clone())
    }

    /// Assignment distributions of a batch.
    fn assign_batch(&self, x: &DenseArray) -> Result<Vec<AssignmentDistribution>> {
        let mut g = Graph::new();
        let enc = self.bind(&mut g)?;
        let xv = g.constant(as_batch(x, self.config().input_dim)?)?;
        let f = enc.features(&mut g, xv)?;
        let logits = enc.logits(&mut g, f)?;
        let lv = g.value(logits);
        (0..lv.rows())
            .map(|i| AssignmentDistribution::from_logits(lv.row(i)))
            .collect()
    }

    /// Assignment distribution of one datum.
    fn assign(&self, x: &[f64]) -> Result<AssignmentDistribution> {
        let batch = DenseArray::vector(x.to_vec());
        Ok(self.assign_batch(&batch)?.remove(0))
    }
}

/// Reshapes a single vector into a `1 × d` batch and checks the width.
fn as_batch(x: &DenseArray, input_dim: usize) -> Result<DenseArray> {
    if x.cols() != input_dim || x.shape().len() > 2 {
        return Err(Error::shape("encoder input", x.shape(), &[input_dim]));
    }
    x.clone().reshape(vec![x.rows(), input_dim])
}

/// The online (trainable) encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: ParameterStore,
}

impl Encoder {
    /// Glorot-uniform layer weights, zero biases, unit-norm Gaussian
    /// prototype rows.
    pub fn init<R: Rng>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParameterStore::new();
        for (i, (fan_in, fan_out)) in config.layer_dims().into_iter().enumerate() {
            params.insert(&layer_weight(i), glorot_uniform(rng, fan_in, fan_out))?;
            params.insert(&layer_bias(i), DenseArray::zeros(&[fan_out]))?;
        }
        let (k, d) = (config.clusters, config.feature_dim);
        let mut protos = Vec::with_capacity(k * d);
        for _ in 0..k {
            let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let norm = l2_norm(&row);
            protos.extend(row.iter().map(|v| v / norm));
        }
        params.insert(PROTOTYPES, DenseArray::matrix(k, d, protos)?)?;
        params.insert(HEAD_WEIGHT, glorot_uniform(rng, k, d))?;
        params.insert(HEAD_BIAS, DenseArray::zeros(&[d]))?;
        Ok(Self { config, params })
    }

    /// Wraps an existing store after checking every expected shape.
    pub fn from_params(config: EncoderConfig, params: ParameterStore) -> Result<Self> {
        config.validate()?;
        let expected = config.parameter_shapes();
        if expected.len() != params.len() {
            return Err(Error::CountMismatch {
                expected: expected.len(),
                actual: params.len(),
            });
        }
        for (name, shape) in &expected {
            let got = params.get(name)?;
            if got.shape() != shape.as_slice() {
                return Err(Error::shape("encoder parameter", shape, got.shape()));
            }
        }
        Ok(Self { config, params })
    }

    /// `f(x)` as a graph node; `x` may be one vector or a batch.
    pub fn encode(&self, g: &mut Graph, x: &DenseArray) -> Result<Var> {
        let enc = self.bind(g)?;
        let xv = g.constant(as_batch(x, self.config.input_dim)?)?;
        enc.features(g, xv)
    }
}

impl EncoderWeights for Encoder {
    fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn bind_weight(&self, g: &mut Graph, name: &str) -> Result<Var> {
        self.params.bind(g, name)
    }
}

/// Moving-average copy of an [`Encoder`]. Its weights enter graphs only as
/// constants, so no gradient can reach them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumEncoder {
    pub config: EncoderConfig,
    pub weights: BTreeMap<String, DenseArray>,
}

impl MomentumEncoder {
    pub fn from_online(online: &Encoder) -> Self {
        Self {
            config: online.config.clone(),
            weights: online.params.values(),
        }
    }

    /// `θ̂ ← m·θ̂ + (1 − m)·θ` over every parameter.
    pub fn update(&mut self, source: &Encoder, m: f64) -> Result<()> {
        momentum_update(self, source, m)
    }
}

impl EncoderWeights for MomentumEncoder {
    fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn bind_weight(&self, g: &mut Graph, name: &str) -> Result<Var> {
        let w = self
            .weights
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        g.constant(w.clone())
    }
}

/// `θ̂ ← m·θ̂ + (1 − m)·θ` applied to all parameters, prototypes and the
/// instance head included.
pub fn momentum_update(target: &mut MomentumEncoder, source: &Encoder, m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::Config(format!("momentum {m} outside [0, 1]")));
    }
    if target.weights.len() != source.params.len() {
        return Err(Error::CountMismatch {
            expected: source.params.len(),
            actual: target.weights.len(),
        });
    }
    for (name, param) in source.params.iter() {
        let dst = target
            .weights
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if dst.shape() != param.value.shape() {
            return Err(Error::shape("momentum_update", dst.shape(), param.value.shape()));
        }
        for (t, &s) in dst.data_mut().iter_mut().zip(param.value.data()) {
            *t = m * *t + (1.0 - m) * s;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn small(k: usize) -> Encoder {
        let cfg = EncoderConfig {
            input_dim: 3,
            hidden: vec![5],
            feature_dim: 4,
            clusters: k,
            normalize_prototypes: false,
        };
        Encoder::init(cfg, &mut stream_rng(1, Stream::Init, 0)).unwrap()
    }

    #[test]
    fn shapes_chain() {
        let enc = small(3);
        assert_eq!(enc.params.get("layer0.weight").unwrap().shape(), &[3, 5]);
        assert_eq!(enc.params.get("layer1.weight").unwrap().shape(), &[5, 4]);
        assert_eq!(enc.params.get(PROTOTYPES).unwrap().shape(), &[3, 4]);
        for i in 0..3 {
            let row = enc.params.get(PROTOTYPES).unwrap().row(i).to_vec();
            assert!((l2_norm(&row) - 1.0).abs() < 1e-12);
        }
        assert!(Encoder::from_params(enc.config.clone(), enc.params.clone()).is_ok());
    }

    #[test]
    fn rejects_degenerate_configs() {
        let mut cfg = EncoderConfig::new(2, 1);
        assert!(cfg.validate().is_err());
        cfg.clusters = 0;
        assert!(matches!(cfg.validate(), Err(Error::EmptyModel)));
        let mut cfg = EncoderConfig::new(2, 2);
        cfg.feature_dim = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let mut enc = small(2);
        for name in enc.params.names().map(str::to_string).collect::<Vec<_>>() {
            enc.params.get_mut(&name).unwrap().data_mut().fill(0.0);
        }
        let f = enc.features_of(&DenseArray::vector(vec![1.0, -2.0, 3.0])).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_is_deterministic_and_checks_width() {
        let enc = small(2);
        let x = DenseArray::vector(vec![0.3, -0.1, 2.0]);
        assert_eq!(enc.features_of(&x).unwrap(), enc.features_of(&x).unwrap());
        let mut g = Graph::new();
        assert!(enc.encode(&mut g, &DenseArray::vector(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn identical_prototypes_give_uniform_assignment() {
        let mut enc = small(3);
        let protos = enc.params.get_mut(PROTOTYPES).unwrap();
        let first = protos.row(0).to_vec();
        for i in 1..3 {
            protos.row_mut(i).copy_from_slice(&first);
        }
        let pi = enc.assign(&[1.0, 2.0, -1.0]).unwrap();
        for &p in pi.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_prototypes_closed_form() {
        // Single linear layer set to the identity so f(x) = x; x = μ₁.
        let cfg = EncoderConfig {
            input_dim: 2,
            hidden: vec![],
            feature_dim: 2,
            clusters: 2,
            normalize_prototypes: false,
        };
        let mut enc = Encoder::init(cfg, &mut stream_rng(3, Stream::Init, 0)).unwrap();
        *enc.params.get_mut("layer0.weight").unwrap() =
            DenseArray::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        *enc.params.get_mut(PROTOTYPES).unwrap() =
            DenseArray::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let pi = enc.assign(&[1.0, 0.0]).unwrap();
        let e = 1f64.exp();
        assert!((pi.probs()[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((pi.probs()[0] - 0.731).abs() < 5e-4);
        assert!((pi.probs()[1] - 0.269).abs() < 5e-4);
    }

    #[test]
    fn assignments_lie_on_simplex() {
        let enc = small(4);
        let mut rng = stream_rng(9, Stream::Check, 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let pi = enc.assign(&x).unwrap();
            assert!((pi.probs().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(pi.probs().iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn zero_head_gives_normalized_features() {
        let mut enc = small(2);
        enc.params.get_mut(HEAD_WEIGHT).unwrap().data_mut().fill(0.0);
        let x = DenseArray::matrix(1, 3, vec![0.5, 1.5, -0.5]).unwrap();
        let mut g = Graph::new();
        let bound = enc.bind(&mut g).unwrap();
        let xv = g.constant(x).unwrap();
        let f = bound.features(&mut g, xv).unwrap();
        let c = g.constant(DenseArray::matrix(1, 2, vec![0.3, 0.7]).unwrap()).unwrap();
        let e = bound.instance_embed(&mut g, f, c).unwrap();
        let fv = g.value(f).data().to_vec();
        let n = l2_norm(&fv);
        let ev = g.value(e).data();
        assert!((l2_norm(ev) - 1.0).abs() < 1e-9);
        for (a, b) in ev.iter().zip(&fv) {
            assert!((a - b / n).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_update_extremes() {
        let online = small(2);
        let mut target = MomentumEncoder::from_online(&online);
        for v in target.weights.values_mut() {
            v.data_mut().fill(0.0);
        }
        let before = target.clone();
        target.update(&online, 1.0).unwrap();
        assert_eq!(target, before);
        target.update(&online, 0.0).unwrap();
        assert_eq!(target.weights, online.params.values());
        assert!(target.update(&online, 1.5).is_err());
    }

    #[test]
    fn momentum_update_coefficients() {
        let mut online = small(2);
        for name in online.params.names().map(str::to_string).collect::<Vec<_>>() {
            online.params.get_mut(&name).unwrap().data_mut().fill(1.0);
        }
        let mut target = MomentumEncoder::from_online(&online);
        for v in target.weights.values_mut() {
            v.data_mut().fill(0.0);
        }
        target.update(&online, 0.999).unwrap();
        for v in target.weights.values() {
            assert!(v.data().iter().all(|&x| (x - 0.001).abs() < 1e-15));
        }
    }

    #[test]
    fn momentum_converges_geometrically() {
        let online = small(2);
        let mut target = MomentumEncoder::from_online(&online);
        let name = PROTOTYPES;
        target.weights.get_mut(name).unwrap().data_mut().fill(0.0);
        let goal = online.params.get(name).unwrap().data()[0];
        let m = 0.9;
        let mut gap = goal.abs();
        for _ in 0..20 {
            target.update(&online, m).unwrap();
            let next = (target.weights[name].data()[0] - goal).abs();
            assert!((next - m * gap).abs() < 1e-12);
            gap = next;
        }
    }

    #[test]
    fn argmax_ties_go_low_and_shift_invariance_holds() {
        let pi = AssignmentDistribution::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(pi.argmax(), 0);
        let a = AssignmentDistribution::from_logits(&[0.1, 2.0, -1.0]).unwrap();
        let b = AssignmentDistribution::from_logits(&[100.1, 102.0, 99.0]).unwrap();
        assert_eq!(a.argmax(), b.argmax());
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
