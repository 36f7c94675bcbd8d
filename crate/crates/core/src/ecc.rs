//! Edge-conditioned convolution.
//!
//! `X'(v_i) = 1/|Ne(v_i)| Σ_{v_j ∈ Ne(v_i)} F(L(v_i, v_j)) X(v_j) + b`, where
//! the filter network `F` maps an edge feature vector to an `out x in` weight
//! matrix. Isolated nodes output `b`. Edge features are not modified here.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Message, MessagePlan, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NeighborIndex};
use crate::init::uniform_fan_in;

/// Every directed incidence of `g` as a message, with `1/deg` averaging.
/// Each node's messages are ordered by edge row, which node relabeling does
/// not change, so relabeled graphs sum in the same order and agree bitwise.
pub fn message_plan(g: &AttributedGraph, index: &NeighborIndex) -> MessagePlan {
    let mut messages = Vec::with_capacity(2 * g.num_edges());
    let mut scale = vec![0.0; g.n];
    for (i, s) in scale.iter_mut().enumerate() {
        let nbrs = index.neighbors(i);
        if !nbrs.is_empty() {
            *s = 1.0 / nbrs.len() as f64;
        }
        let start = messages.len();
        messages.extend(nbrs.iter().map(|&(j, e)| Message {
            target: i,
            source: j,
            edge: e,
        }));
        messages[start..].sort_unstable_by_key(|m| m.edge);
    }
    MessagePlan {
        num_nodes: g.n,
        num_edges: g.num_edges(),
        messages,
        scale,
    }
}

/// Disjoint union of several plans, offsetting node and edge indices.
pub fn concat_plans<'a>(plans: impl IntoIterator<Item = &'a MessagePlan>) -> MessagePlan {
    let mut out = MessagePlan {
        num_nodes: 0,
        num_edges: 0,
        messages: Vec::new(),
        scale: Vec::new(),
    };
    for p in plans {
        let (dn, de) = (out.num_nodes, out.num_edges);
        out.messages.extend(p.messages.iter().map(|m| Message {
            target: m.target + dn,
            source: m.source + dn,
            edge: m.edge + de,
        }));
        out.scale.extend_from_slice(&p.scale);
        out.num_nodes += p.num_nodes;
        out.num_edges += p.num_edges;
    }
    out
}

/// One edge-conditioned convolution layer. The filter network has one ReLU
/// hidden layer (default width `2 d_e + 1`) followed by a linear map to
/// `out * in` values, read row-major as the `out x in` weight matrix.
#[derive(Clone, Debug)]
pub struct EccLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub edge_dim: usize,
    pub hidden: usize,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub bias: ParamId,
}

impl EccLayer {
    pub fn default_hidden(edge_dim: usize) -> usize {
        2 * edge_dim + 1
    }

    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        edge_dim: usize,
        in_dim: usize,
        out_dim: usize,
        hidden: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let hidden = hidden.unwrap_or_else(|| Self::default_hidden(edge_dim));
        let flat = in_dim * out_dim;
        EccLayer {
            in_dim,
            out_dim,
            edge_dim,
            hidden,
            w1: store.add(format!("{prefix}.filter.w1"), uniform_fan_in(rng, edge_dim, hidden, edge_dim)),
            b1: store.add(format!("{prefix}.filter.b1"), uniform_fan_in(rng, 1, hidden, edge_dim)),
            w2: store.add(format!("{prefix}.filter.w2"), uniform_fan_in(rng, hidden, flat, hidden)),
            b2: store.add(format!("{prefix}.filter.b2"), uniform_fan_in(rng, 1, flat, hidden)),
            bias: store.add(format!("{prefix}.bias"), uniform_fan_in(rng, 1, out_dim, in_dim)),
        }
    }

    /// Hidden activations of the filter network for every edge row of `l`.
    pub fn filter_hidden(&self, tape: &mut Tape, store: &ParamStore, l: Var) -> Result<Var> {
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let pre = tape.matmul(l, w1)?;
        let pre = tape.add_row(pre, b1)?;
        tape.relu(pre)
    }

    /// Flattened filter output (`E x out*in`) for every edge row of `l`.
    pub fn filter_weights(&self, tape: &mut Tape, store: &ParamStore, l: Var) -> Result<Var> {
        let h = self.filter_hidden(tape, store, l)?;
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let f = tape.matmul(h, w2)?;
        tape.add_row(f, b2)
    }

    /// The `out x in` weight matrix generated for a single edge feature vector.
    pub fn filter_forward(&self, store: &ParamStore, edge_feature: &[f64]) -> Result<Tensor> {
        if edge_feature.len() != self.edge_dim {
            return Err(Error::shape("edge feature", self.edge_dim, edge_feature.len()));
        }
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::row_vector(edge_feature));
        let f = self.filter_weights(&mut tape, store, l)?;
        tape.value(f).clone().reshape(self.out_dim, self.in_dim)
    }

    fn check_inputs(&self, tape: &Tape, l: Var, x: Var, plan: &MessagePlan) -> Result<()> {
        if tape.shape(x) != (plan.num_nodes, self.in_dim) {
            return Err(Error::shape(
                "ecc node features",
                format!("({}, {})", plan.num_nodes, self.in_dim),
                format!("{:?}", tape.shape(x)),
            ));
        }
        if tape.shape(l) != (plan.num_edges, self.edge_dim) {
            return Err(Error::shape(
                "ecc edge features",
                format!("({}, {})", plan.num_edges, self.edge_dim),
                format!("{:?}", tape.shape(l)),
            ));
        }
        Ok(())
    }

    /// Layer output (`n x out`) before normalisation and activation.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        l: Var,
        x: Var,
        plan: Arc<MessagePlan>,
    ) -> Result<Var> {
        self.check_inputs(tape, l, x, &plan)?;
        let h = self.filter_hidden(tape, store, l)?;
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let agg = tape.edge_conditioned_aggregate(h, x, w2, b2, plan)?;
        let bias = tape.param(store, self.bias);
        tape.add_row(agg, bias)
    }

    /// Same result as [`EccLayer::forward`], built from generic primitives with
    /// every per-edge weight matrix materialised. Slower; kept as a second
    /// route for testing the fused kernel.
    pub fn forward_materialized(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        l: Var,
        x: Var,
        plan: &MessagePlan,
    ) -> Result<Var> {
        self.check_inputs(tape, l, x, plan)?;
        let f = self.filter_weights(tape, store, l)?;
        let edges: Vec<usize> = plan.messages.iter().map(|m| m.edge).collect();
        let sources: Vec<usize> = plan.messages.iter().map(|m| m.source).collect();
        let targets: Vec<usize> = plan.messages.iter().map(|m| m.target).collect();
        let f_msg = tape.gather_rows(f, edges)?;
        let x_msg = tape.gather_rows(x, sources)?;
        let msg = tape.row_matvec(f_msg, x_msg)?;
        let summed = tape.scatter_add_rows(msg, targets, plan.num_nodes)?;
        let scale = tape.constant(Tensor::column_vector(&plan.scale));
        let agg = tape.row_scale(summed, scale)?;
        let bias = tape.param(store, self.bias);
        tape.add_row(agg, bias)
    }
}

/// Value-level convenience: one layer applied to a single graph.
pub fn ecc_forward(
    layer: &EccLayer,
    store: &ParamStore,
    g: &AttributedGraph,
    index: &NeighborIndex,
    x_prev: &Tensor,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let l = tape.constant(g.l.clone());
    let x = tape.constant(x_prev.clone());
    let out = layer.forward(&mut tape, store, l, x, Arc::new(message_plan(g, index)))?;
    Ok(tape.value(out).clone())
}

/// Optional learnable per-edge transform `L' = relu(L W + b)` (`d_e -> d_e`),
/// applied before pooling when enabled. The default model passes edge
/// features through unchanged.
#[derive(Clone, Debug)]
pub struct EdgeUpdate {
    pub w: ParamId,
    pub b: ParamId,
}

impl EdgeUpdate {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, edge_dim: usize, rng: &mut R) -> Self {
        EdgeUpdate {
            w: store.add(format!("{prefix}.w"), uniform_fan_in(rng, edge_dim, edge_dim, edge_dim)),
            b: store.add(format!("{prefix}.b"), uniform_fan_in(rng, 1, edge_dim, edge_dim)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, l: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(l, w)?;
        let y = tape.add_row(y, b)?;
        tape.relu(y)
    }
}
