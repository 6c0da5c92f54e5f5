//! Static computation graph with reverse-mode differentiation.
//!
//! A graph is built once per architecture and sequence-length bucket, then
//! executed many times. Nodes are stored in construction order, which is
//! already topological: every node's inputs precede it. Parameters live
//! outside the graph in a [`ParamStore`] so that several graphs (different
//! batch sizes or bucket lengths) share one set of weights.

use std::collections::HashMap;

use indexmap::IndexMap;

use super::kernels as k;
use super::kernels::ReduceKind;
use super::tensor::Tensor;
use crate::error::{CoreError, CoreResult};

pub type NodeId = usize;

/// Named parameter registry. Insertion order is the checkpoint order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    pub params: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        assert!(
            self.params.insert(name.to_string(), t).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }
}

/// Per-execution named inputs: float tensors plus integer id lists for
/// embedding lookups.
#[derive(Debug, Clone, Default)]
pub struct GraphInputs {
    pub tensors: HashMap<String, Tensor>,
    pub ids: HashMap<String, Vec<usize>>,
}

impl GraphInputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensor(mut self, name: &str, t: Tensor) -> Self {
        self.tensors.insert(name.to_string(), t);
        self
    }

    pub fn id_list(mut self, name: &str, ids: Vec<usize>) -> Self {
        self.ids.insert(name.to_string(), ids);
        self
    }

    pub fn set_tensor(&mut self, name: &str, t: Tensor) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn set_ids(&mut self, name: &str, ids: Vec<usize>) {
        self.ids.insert(name.to_string(), ids);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input(String),
    Param(String),
    Constant(Tensor),
    MatMul {
        a: NodeId,
        b: NodeId,
        transpose_b: bool,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Gelu(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    },
    Reduce {
        x: NodeId,
        axis: usize,
        kind: ReduceKind,
    },
    MeanAll(NodeId),
    Concat(Vec<NodeId>),
    Narrow {
        x: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    },
    Reshape {
        x: NodeId,
        shape: Vec<usize>,
    },
    Permute {
        x: NodeId,
        perm: Vec<usize>,
    },
    Tile {
        x: NodeId,
        times: usize,
    },
    Embedding {
        table: NodeId,
        ids: String,
    },
    MaskedMeanRows {
        x: NodeId,
        mask: NodeId,
    },
    MseMasked {
        pred: NodeId,
        target: NodeId,
        mask: NodeId,
    },
}

/// Gradients produced by [`Graph::backward`]: one tensor per parameter plus
/// one per requested (float) input.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub params: IndexMap<String, Tensor>,
    pub inputs: IndexMap<String, Tensor>,
}

/// Topologically ordered node list with cached forward values and adjoints.
pub struct Graph {
    ops: Vec<Op>,
    values: Vec<Option<Tensor>>,
    /// ids consumed by Embedding nodes in the current forward
    cached_ids: Vec<Option<Vec<usize>>>,
    param_nodes: HashMap<String, NodeId>,
    input_nodes: HashMap<String, NodeId>,
    outputs: IndexMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            ops: Vec::new(),
            values: Vec::new(),
            cached_ids: Vec::new(),
            param_nodes: HashMap::new(),
            input_nodes: HashMap::new(),
            outputs: IndexMap::new(),
        }
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.ops.push(op);
        self.values.push(None);
        self.cached_ids.push(None);
        self.ops.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    // -- builder methods ----------------------------------------------------

    pub fn input(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.input_nodes.get(name) {
            return id;
        }
        let id = self.push(Op::Input(name.to_string()));
        self.input_nodes.insert(name.to_string(), id);
        id
    }

    pub fn param(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.param_nodes.get(name) {
            return id;
        }
        let id = self.push(Op::Param(name.to_string()));
        self.param_nodes.insert(name.to_string(), id);
        id
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Constant(t))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul {
            a,
            b,
            transpose_b: false,
        })
    }

    /// `a @ b^T` over the last two axes.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul {
            a,
            b,
            transpose_b: true,
        })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softmax(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        self.push(Op::LayerNorm { x, gamma, beta })
    }

    pub fn reduce_sum(&mut self, x: NodeId, axis: usize) -> NodeId {
        self.push(Op::Reduce {
            x,
            axis,
            kind: ReduceKind::Sum,
        })
    }

    pub fn reduce_mean(&mut self, x: NodeId, axis: usize) -> NodeId {
        self.push(Op::Reduce {
            x,
            axis,
            kind: ReduceKind::Mean,
        })
    }

    pub fn reduce_max(&mut self, x: NodeId, axis: usize) -> NodeId {
        self.push(Op::Reduce {
            x,
            axis,
            kind: ReduceKind::Max,
        })
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        self.push(Op::MeanAll(x))
    }

    pub fn concat(&mut self, parts: Vec<NodeId>) -> NodeId {
        self.push(Op::Concat(parts))
    }

    pub fn narrow(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> NodeId {
        self.push(Op::Narrow {
            x,
            axis,
            start,
            len,
        })
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        self.push(Op::Reshape {
            x,
            shape: shape.to_vec(),
        })
    }

    pub fn permute(&mut self, x: NodeId, perm: &[usize]) -> NodeId {
        self.push(Op::Permute {
            x,
            perm: perm.to_vec(),
        })
    }

    pub fn tile(&mut self, x: NodeId, times: usize) -> NodeId {
        self.push(Op::Tile { x, times })
    }

    pub fn embedding(&mut self, table: NodeId, ids_name: &str) -> NodeId {
        self.push(Op::Embedding {
            table,
            ids: ids_name.to_string(),
        })
    }

    pub fn masked_mean_rows(&mut self, x: NodeId, mask: NodeId) -> NodeId {
        self.push(Op::MaskedMeanRows { x, mask })
    }

    pub fn mse_masked(&mut self, pred: NodeId, target: NodeId, mask: NodeId) -> NodeId {
        self.push(Op::MseMasked { pred, target, mask })
    }

    pub fn mark_output(&mut self, name: &str, node: NodeId) {
        self.outputs.insert(name.to_string(), node);
    }

    pub fn output_node(&self, name: &str) -> Option<NodeId> {
        self.outputs.get(name).copied()
    }

    // -- execution ----------------------------------------------------------

    fn err(&self, node: NodeId, message: String) -> CoreError {
        CoreError::ShapeMismatch { node, message }
    }

    fn val(&self, id: NodeId) -> &Tensor {
        self.values[id].as_ref().expect("value computed")
    }

    /// Deterministic evaluation of every node in order. Input names and
    /// shapes must match what the graph's operations expect.
    pub fn forward(&mut self, store: &ParamStore, inputs: &GraphInputs) -> CoreResult<()> {
        for i in 0..self.ops.len() {
            let value: Tensor = match &self.ops[i] {
                Op::Input(name) => inputs
                    .tensors
                    .get(name)
                    .cloned()
                    .ok_or_else(|| self.err(i, format!("missing input '{name}'")))?,
                Op::Param(name) => store
                    .get(name)
                    .cloned()
                    .ok_or_else(|| self.err(i, format!("missing parameter '{name}'")))?,
                Op::Constant(t) => t.clone(),
                Op::MatMul { a, b, transpose_b } => {
                    k::matmul_fwd(self.val(*a), self.val(*b), *transpose_b)
                        .map_err(|m| self.err(i, m))?
                }
                Op::Add(a, b) => {
                    k::add_fwd(self.val(*a), self.val(*b)).map_err(|m| self.err(i, m))?
                }
                Op::Mul(a, b) => {
                    k::mul_fwd(self.val(*a), self.val(*b)).map_err(|m| self.err(i, m))?
                }
                Op::Scale(a, c) => k::scale_fwd(self.val(*a), *c),
                Op::Relu(a) => k::relu_fwd(self.val(*a)),
                Op::Gelu(a) => k::gelu_fwd(self.val(*a)),
                Op::Sigmoid(a) => k::sigmoid_fwd(self.val(*a)),
                Op::Exp(a) => k::exp_fwd(self.val(*a)),
                Op::Softmax(a) => k::softmax_fwd(self.val(*a)).map_err(|m| self.err(i, m))?,
                Op::LayerNorm { x, gamma, beta } => {
                    k::layer_norm_fwd(self.val(*x), self.val(*gamma), self.val(*beta))
                        .map_err(|m| self.err(i, m))?
                }
                Op::Reduce { x, axis, kind } => {
                    k::reduce_fwd(self.val(*x), *axis, *kind).map_err(|m| self.err(i, m))?
                }
                Op::MeanAll(x) => k::mean_all_fwd(self.val(*x)),
                Op::Concat(parts) => {
                    let refs: Vec<&Tensor> = parts.iter().map(|&p| self.val(p)).collect();
                    k::concat_fwd(&refs).map_err(|m| self.err(i, m))?
                }
                Op::Narrow {
                    x,
                    axis,
                    start,
                    len,
                } => k::narrow_fwd(self.val(*x), *axis, *start, *len)
                    .map_err(|m| self.err(i, m))?,
                Op::Reshape { x, shape } => {
                    k::reshape_fwd(self.val(*x), shape).map_err(|m| self.err(i, m))?
                }
                Op::Permute { x, perm } => {
                    k::permute_fwd(self.val(*x), perm).map_err(|m| self.err(i, m))?
                }
                Op::Tile { x, times } => k::tile_fwd(self.val(*x), *times),
                Op::Embedding { table, ids } => {
                    let id_list = inputs
                        .ids
                        .get(ids)
                        .ok_or_else(|| self.err(i, format!("missing id input '{ids}'")))?;
                    self.cached_ids[i] = Some(id_list.clone());
                    k::embedding_fwd(self.val(*table), id_list).map_err(|m| self.err(i, m))?
                }
                Op::MaskedMeanRows { x, mask } => {
                    k::masked_mean_rows_fwd(self.val(*x), self.val(*mask))
                        .map_err(|m| self.err(i, m))?
                }
                Op::MseMasked { pred, target, mask } => {
                    k::mse_masked_fwd(self.val(*pred), self.val(*target), self.val(*mask))
                        .map_err(|m| self.err(i, m))?
                }
            };
            self.values[i] = Some(value);
        }
        Ok(())
    }

    /// Value of a node after [`Graph::forward`].
    pub fn value(&self, id: NodeId) -> &Tensor {
        self.val(id)
    }

    pub fn output(&self, name: &str) -> Option<&Tensor> {
        self.outputs.get(name).map(|&id| self.val(id))
    }

    /// Reverse traversal from a scalar loss node. Returns gradients for all
    /// parameters and all float inputs.
    pub fn backward(&mut self, loss: NodeId) -> CoreResult<Gradients> {
        let loss_val = self.values[loss]
            .as_ref()
            .ok_or_else(|| self.err(loss, "backward before forward".into()))?;
        if !loss_val.is_scalar() {
            return Err(CoreError::NotScalarLoss(loss));
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        adjoints[loss] = Some(Tensor::scalar(1.0));

        fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
            match slot {
                Some(acc) => {
                    for (a, d) in acc.data.iter_mut().zip(&delta.data) {
                        *a += d;
                    }
                }
                None => *slot = Some(delta),
            }
        }

        for i in (0..=loss).rev() {
            let Some(grad) = adjoints[i].take() else {
                continue;
            };
            match &self.ops[i] {
                Op::Input(_) | Op::Param(_) | Op::Constant(_) => {
                    adjoints[i] = Some(grad);
                    continue;
                }
                Op::MatMul { a, b, transpose_b } => {
                    let (da, db) = k::matmul_bwd(self.val(*a), self.val(*b), *transpose_b, &grad);
                    accumulate(&mut adjoints[*a], da);
                    accumulate(&mut adjoints[*b], db);
                }
                Op::Add(a, b) => {
                    let (da, db) = k::add_bwd(self.val(*a), self.val(*b), &grad);
                    accumulate(&mut adjoints[*a], da);
                    accumulate(&mut adjoints[*b], db);
                }
                Op::Mul(a, b) => {
                    let (da, db) = k::mul_bwd(self.val(*a), self.val(*b), &grad);
                    accumulate(&mut adjoints[*a], da);
                    accumulate(&mut adjoints[*b], db);
                }
                Op::Scale(a, c) => accumulate(&mut adjoints[*a], k::scale_bwd(*c, &grad)),
                Op::Relu(a) => accumulate(&mut adjoints[*a], k::relu_bwd(self.val(*a), &grad)),
                Op::Gelu(a) => accumulate(&mut adjoints[*a], k::gelu_bwd(self.val(*a), &grad)),
                Op::Sigmoid(a) => {
                    accumulate(&mut adjoints[*a], k::sigmoid_bwd(self.val(i), &grad))
                }
                Op::Exp(a) => accumulate(&mut adjoints[*a], k::exp_bwd(self.val(i), &grad)),
                Op::Softmax(a) => {
                    accumulate(&mut adjoints[*a], k::softmax_bwd(self.val(i), &grad))
                }
                Op::LayerNorm { x, gamma, beta } => {
                    let (dx, dg, db) = k::layer_norm_bwd(self.val(*x), self.val(*gamma), &grad);
                    accumulate(&mut adjoints[*x], dx);
                    accumulate(&mut adjoints[*gamma], dg);
                    accumulate(&mut adjoints[*beta], db);
                }
                Op::Reduce { x, axis, kind } => {
                    let dx = k::reduce_bwd(self.val(*x), *axis, *kind, self.val(i), &grad);
                    accumulate(&mut adjoints[*x], dx);
                }
                Op::MeanAll(x) => {
                    accumulate(&mut adjoints[*x], k::mean_all_bwd(self.val(*x), &grad))
                }
                Op::Concat(parts) => {
                    let refs: Vec<&Tensor> = parts.iter().map(|&p| self.val(p)).collect();
                    let grads = k::concat_bwd(&refs, &grad);
                    for (&p, dp) in parts.clone().iter().zip(grads) {
                        accumulate(&mut adjoints[p], dp);
                    }
                }
                Op::Narrow {
                    x,
                    axis,
                    start,
                    len,
                } => {
                    let dx = k::narrow_bwd(self.val(*x), *axis, *start, *len, &grad);
                    accumulate(&mut adjoints[*x], dx);
                }
                Op::Reshape { x, .. } => {
                    let mut dx = grad.clone();
                    dx.shape = self.val(*x).shape.clone();
                    accumulate(&mut adjoints[*x], dx);
                }
                Op::Permute { x, perm } => {
                    let dx = k::permute_bwd(self.val(*x), perm, &grad);
                    accumulate(&mut adjoints[*x], dx);
                }
                Op::Tile { x, times } => {
                    let dx = k::tile_bwd(self.val(*x), *times, &grad);
                    accumulate(&mut adjoints[*x], dx);
                }
                Op::Embedding { table, ids: _ } => {
                    let id_list = self.cached_ids[i].as_ref().expect("ids cached in forward");
                    let dt = k::embedding_bwd(self.val(*table), id_list, &grad);
                    accumulate(&mut adjoints[*table], dt);
                }
                Op::MaskedMeanRows { x, mask } => {
                    let dx = k::masked_mean_rows_bwd(self.val(*x), self.val(*mask), &grad);
                    accumulate(&mut adjoints[*x], dx);
                }
                Op::MseMasked { pred, target, mask } => {
                    let (dp, dt) =
                        k::mse_masked_bwd(self.val(*pred), self.val(*target), self.val(*mask), &grad);
                    accumulate(&mut adjoints[*pred], dp);
                    accumulate(&mut adjoints[*target], dt);
                    let _ = mask;
                }
            }
        }

        let mut out = Gradients::default();
        for (name, &id) in &self.param_nodes {
            if let Some(g) = adjoints[id].take() {
                out.params.insert(name.clone(), g);
            }
        }
        for (name, &id) in &self.input_nodes {
            if let Some(g) = adjoints[id].take() {
                out.inputs.insert(name.clone(), g);
            }
        }
        out.params.sort_keys();
        out.inputs.sort_keys();
        Ok(out)
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}
