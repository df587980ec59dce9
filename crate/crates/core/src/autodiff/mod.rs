//! Reverse-mode automatic differentiation over a tape of fused operations.
//!
//! Operations work on whole layers (an LSTM over all timesteps, a layer norm
//! over every row) rather than scalars, so a backward pass costs a small
//! constant times the forward pass. The graph borrows a [`ParameterSet`];
//! gradients come back aligned with it.

mod adam;
mod checkpoint;
mod graph;
mod layer_norm;
mod linalg;
mod lstm;
mod params;
mod tensor;

pub use adam::{Adam, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointEntry, CheckpointManifest};
pub use graph::{scaled_mse_beta_grad, Activation, Backward, Graph, Var};
pub use layer_norm::LAYER_NORM_EPS;
pub use params::{l2_penalty, Gradients, Parameter, ParameterSet, Role};
pub use tensor::Tensor;
