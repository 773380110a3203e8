//! Dense tensors and exact reverse-mode gradients for small feed-forward
//! stacks.
//!
//! Only what the generator and the classifiers need: affine layers with
//! elementwise activations, a recorded forward pass, and a backward pass that
//! yields gradients with respect to both the parameters and the network input.

mod mlp;
mod ops;
mod rng;
mod tensor;

pub use mlp::{
    backprop_mlp, backward, forward, forward_trace, validate_specs, ForwardTrace, Layer,
    LayerSpec, MlpParams,
};
pub use ops::{activation_apply, affine_apply, sigmoid, Activation};
pub use rng::{gaussian_draw, Rng};
pub use tensor::Tensor;
