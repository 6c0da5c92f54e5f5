//! Minimal reverse-mode differentiable-computation core.
//!
//! Supplies exactly the operations the encoders, backbone, diffusion loss,
//! and discriminators need: matrix multiply, broadcast add, elementwise
//! product, ReLU/GELU/sigmoid/exp, masked softmax, layer normalization,
//! sum/mean/max reductions, feature-axis concatenation, embedding lookup,
//! masked squared-error loss, and a handful of structural ops (reshape,
//! permute, narrow, tile). Double precision throughout.

mod adam;
mod graph;
pub mod kernels;
mod net;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{Gradients, Graph, GraphInputs, NodeId, ParamStore};
pub use kernels::{ReduceKind, LAYER_NORM_EPS, MASK_NEG};
pub use net::{
    attention, encoder_layer, init_attention, init_embedding, init_encoder_layer, init_layer_norm,
    init_linear, init_mlp, layer_norm, linear, mlp, Act, SeqDims,
};
pub use tensor::{strides_of, Tensor};
