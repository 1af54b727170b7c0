//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.

mod array;
mod gradcheck;
mod graph;
mod store;

pub use array::{dot, l2_norm, DenseArray};
pub use gradcheck::{check_gradient, relative_error, GradCheckReport, FULL_CHECK_LIMIT, RELATIVE_FLOOR};
pub use graph::{log_sum_exp, softmax_in_place, Gradients, Graph, OpKind, Var, NORM_EPS};
pub use store::{adam_step, AdamConfig, Parameter, ParameterStore};
