use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::array::DenseArray;
use super::graph::{Gradients, Graph, Var};
use crate::error::{Error, Result};

/// A trainable tensor together with its Adam moment accumulators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: DenseArray,
    /// First-moment estimate; `None` until the first optimizer step.
    pub first_moment: Option<DenseArray>,
    pub second_moment: Option<DenseArray>,
    pub steps: u64,
}

impl Parameter {
    pub fn new(value: DenseArray) -> Self {
        Self {
            value,
            first_moment: None,
            second_moment: None,
            steps: 0,
        }
    }
}

/// Named parameters in deterministic (sorted) order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    params: BTreeMap<String, Parameter>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new parameter. Names must be unique.
    pub fn insert(&mut self, name: &str, value: DenseArray) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        if !value.is_finite() {
            return Err(Error::NonFiniteInput {
                context: format!("parameter {name}"),
            });
        }
        self.params.insert(name.to_string(), Parameter::new(value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&DenseArray> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut DenseArray> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_entries(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Binds a parameter as a trainable leaf of `graph`.
    pub fn bind(&self, graph: &mut Graph, name: &str) -> Result<Var> {
        graph.param(name, self.get(name)?)
    }

    /// Plain copies of every value, without optimizer state.
    pub fn values(&self) -> BTreeMap<String, DenseArray> {
        self.params
            .iter()
            .map(|(k, p)| (k.clone(), p.value.clone()))
            .collect()
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter in `store`.
///
/// Moments are created lazily at zero. A parameter absent from `grads` is
/// updated with a zero gradient.
pub fn adam_step(store: &mut ParameterStore, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    for (name, param) in store.params.iter_mut() {
        let shape = param.value.shape().to_vec();
        let zero;
        let grad = match grads.get(name) {
            Some(g) => {
                if g.shape() != shape.as_slice() {
                    return Err(Error::shape("adam_step", &shape, g.shape()));
                }
                g
            }
            None => {
                zero = DenseArray::zeros(&shape);
                &zero
            }
        };
        let m = param.first_moment.get_or_insert_with(|| DenseArray::zeros(&shape));
        let v = param.second_moment.get_or_insert_with(|| DenseArray::zeros(&shape));
        param.steps += 1;
        let t = param.steps as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (((w, mi), vi), &gi) in param
            .value
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(grad.data())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
