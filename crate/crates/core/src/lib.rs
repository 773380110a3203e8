//! Sparse latent representations for a top-down generator network.
//!
//! The generator `x = G(z) + noise` is trained by alternating two phases per
//! batch: latent codes are inferred by penalized gradient descent (optionally
//! Langevin dynamics) under a spike-and-slab prior, then the network weights
//! take an Adam step on the complete-data log-likelihood at those codes. The
//! prior's mixture weight is annealed from dense to sparse across epochs.
//!
//! All numerical types are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the element type to `f64`, which is what
//! the command-line tools use.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod generator;
pub mod inference;
pub mod metrics;
pub mod ndgrad;
pub mod scalar;
pub mod ssprior;
pub mod trainer;

pub use error::{CheckpointError, Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = ndgrad::Tensor<f64>;
pub type Tensor32 = ndgrad::Tensor<f32>;
pub type PriorParams64 = ssprior::PriorParams<f64>;
pub type GeneratorParams64 = generator::GeneratorParams<f64>;
pub type Checkpoint64 = checkpoint::Checkpoint<f64>;
pub type IdxDataset64 = data::IdxDataset<f64>;
