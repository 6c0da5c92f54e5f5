//! Shared network-building blocks: linear layers, MLPs, and pre-norm
//! transformer encoder layers.
//!
//! Every block comes as a pair: an `init_*` function that registers freshly
//! initialized parameters in a [`ParamStore`], and a wiring function that
//! references the same names inside a [`Graph`]. Several graphs (different
//! batch sizes or sequence buckets) can therefore share one parameter set.

use rand::Rng;

use super::graph::{Graph, NodeId, ParamStore};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Relu,
    Gelu,
}

pub fn init_linear<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) {
    let std = (2.0 / (input + output) as f64).sqrt();
    store.insert(&format!("{name}.w"), Tensor::randn(&[input, output], std, rng));
    store.insert(&format!("{name}.b"), Tensor::zeros(&[output]));
}

pub fn linear(g: &mut Graph, x: NodeId, name: &str) -> NodeId {
    let w = g.param(&format!("{name}.w"));
    let b = g.param(&format!("{name}.b"));
    let h = g.matmul(x, w);
    g.add(h, b)
}

pub fn init_layer_norm(store: &mut ParamStore, name: &str, dim: usize) {
    store.insert(&format!("{name}.g"), Tensor::filled(&[dim], 1.0));
    store.insert(&format!("{name}.s"), Tensor::zeros(&[dim]));
}

pub fn layer_norm(g: &mut Graph, x: NodeId, name: &str) -> NodeId {
    let gamma = g.param(&format!("{name}.g"));
    let beta = g.param(&format!("{name}.s"));
    g.layer_norm(x, gamma, beta)
}

/// Registers an MLP with layer widths `dims[0] -> dims[1] -> ... -> dims[k]`.
pub fn init_mlp<R: Rng>(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut R) {
    for i in 0..dims.len() - 1 {
        init_linear(store, &format!("{name}.{i}"), dims[i], dims[i + 1], rng);
    }
}

/// Wires the MLP; the activation is applied between layers, not after the
/// last one.
pub fn mlp(g: &mut Graph, x: NodeId, name: &str, layers: usize, act: Act) -> NodeId {
    let mut h = x;
    for i in 0..layers {
        h = linear(g, h, &format!("{name}.{i}"));
        if i + 1 < layers {
            h = match act {
                Act::Relu => g.relu(h),
                Act::Gelu => g.gelu(h),
            };
        }
    }
    h
}

/// Concrete shape of a token stack inside one graph bucket.
#[derive(Debug, Clone, Copy)]
pub struct SeqDims {
    pub batch: usize,
    pub seq: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff: usize,
}

impl SeqDims {
    pub fn head_dim(&self) -> usize {
        debug_assert!(self.d_model % self.heads == 0, "d_model must divide by heads");
        self.d_model / self.heads
    }
}

pub fn init_attention<R: Rng>(store: &mut ParamStore, prefix: &str, d_model: usize, rng: &mut R) {
    init_linear(store, &format!("{prefix}.wq"), d_model, d_model, rng);
    init_linear(store, &format!("{prefix}.wk"), d_model, d_model, rng);
    init_linear(store, &format!("{prefix}.wv"), d_model, d_model, rng);
    init_linear(store, &format!("{prefix}.wo"), d_model, d_model, rng);
}

/// Multi-head scaled dot-product self-attention over `x` `[B, S, d]`.
/// `mask_add` is an optional additive-mask node broadcastable to
/// `[B, H, S, S]` (zero at active keys, a large negative constant at padding).
pub fn attention(
    g: &mut Graph,
    x: NodeId,
    mask_add: Option<NodeId>,
    prefix: &str,
    dims: SeqDims,
) -> NodeId {
    let (b, s, d, h) = (dims.batch, dims.seq, dims.d_model, dims.heads);
    let dh = dims.head_dim();
    let split = |g: &mut Graph, t: NodeId| {
        let t = g.reshape(t, &[b, s, h, dh]);
        g.permute(t, &[0, 2, 1, 3])
    };
    let q = linear(g, x, &format!("{prefix}.wq"));
    let k_ = linear(g, x, &format!("{prefix}.wk"));
    let v = linear(g, x, &format!("{prefix}.wv"));
    let (q, k_, v) = (split(g, q), split(g, k_), split(g, v));
    let scores = g.matmul_t(q, k_);
    let mut scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
    if let Some(m) = mask_add {
        scores = g.add(scores, m);
    }
    let attn = g.softmax(scores);
    let ctx = g.matmul(attn, v);
    let ctx = g.permute(ctx, &[0, 2, 1, 3]);
    let ctx = g.reshape(ctx, &[b, s, d]);
    linear(g, ctx, &format!("{prefix}.wo"))
}

pub fn init_encoder_layer<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    d_model: usize,
    ff: usize,
    rng: &mut R,
) {
    init_layer_norm(store, &format!("{prefix}.ln1"), d_model);
    init_attention(store, prefix, d_model, rng);
    init_layer_norm(store, &format!("{prefix}.ln2"), d_model);
    init_linear(store, &format!("{prefix}.ff1"), d_model, ff, rng);
    init_linear(store, &format!("{prefix}.ff2"), ff, d_model, rng);
}

/// Pre-norm encoder layer: attention and position-wise feed-forward blocks,
/// each behind a residual connection.
pub fn encoder_layer(
    g: &mut Graph,
    x: NodeId,
    mask_add: Option<NodeId>,
    prefix: &str,
    dims: SeqDims,
) -> NodeId {
    let h = layer_norm(g, x, &format!("{prefix}.ln1"));
    let attn = attention(g, h, mask_add, prefix, dims);
    let x = g.add(x, attn);
    let h = layer_norm(g, x, &format!("{prefix}.ln2"));
    let f = linear(g, h, &format!("{prefix}.ff1"));
    let f = g.gelu(f);
    let f = linear(g, f, &format!("{prefix}.ff2"));
    g.add(x, f)
}

/// Registers an embedding table `[rows, dim]`.
pub fn init_embedding<R: Rng>(
    store: &mut ParamStore,
    name: &str,
    rows: usize,
    dim: usize,
    rng: &mut R,
) {
    store.insert(name, Tensor::randn(&[rows, dim], 0.02, rng));
}
