//! Deep clustering with two contrastive objectives over one encoder.
//!
//! A cluster-level loss contrasts assignment-weighted aggregates of batch
//! features against a queue of earlier aggregates. An instance-level loss
//! contrasts Gumbel-coded embeddings against a queue of past momentum
//! embeddings. Gradients come from the small tape in [`autodiff`].

pub mod autodiff;
pub mod cluster;
pub mod data;
pub mod encoder;
pub mod error;
pub mod instance;
pub mod metrics;
pub mod queue;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
