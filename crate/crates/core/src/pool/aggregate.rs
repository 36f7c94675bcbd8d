//! Cluster readouts. All of them return a `gamma x d` matrix whose row `k` is
//! cluster `k` (selection order); rows past the last cluster are zero.

use super::{ClusterAssignment, PoolParams};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// One graph's clusters inside a batch whose node and edge rows are stacked;
/// its indices are shifted by the offsets.
#[derive(Clone, Copy, Debug)]
pub struct Placed<'a> {
    pub assign: &'a ClusterAssignment,
    pub node_offset: usize,
    pub edge_offset: usize,
}

impl<'a> Placed<'a> {
    pub fn alone(assign: &'a ClusterAssignment) -> Self {
        Placed {
            assign,
            node_offset: 0,
            edge_offset: 0,
        }
    }
}

fn check_gamma(graphs: &[Placed], gamma: usize) -> Result<()> {
    if let Some(p) = graphs.iter().find(|p| p.assign.len() > gamma) {
        return Err(Error::shape("cluster count", format!("<= {gamma}"), p.assign.len()));
    }
    Ok(())
}

/// Row `b * gamma + k` is the core of cluster `k` of graph `b`, the rest zero.
fn core_rows(tape: &mut Tape, graphs: &[Placed], x: Var, gamma: usize) -> Result<Var> {
    let mut cores = Vec::new();
    let mut slots = Vec::new();
    for (b, p) in graphs.iter().enumerate() {
        for (k, c) in p.assign.clusters.iter().enumerate() {
            cores.push(p.node_offset + c.core);
            slots.push(b * gamma + k);
        }
    }
    let picked = tape.gather_rows(x, cores)?;
    tape.scatter_add_rows(picked, slots, graphs.len() * gamma)
}

/// Edge-conditioned aggregation within each cluster:
///
/// `X''(core_k) = X'(core_k) + Σ_{regular j} Linear(L''(core_k, j)) X'(j) + b_c`
///
/// where `Linear(L) = reshape(L w_c + w_c_bias)` is a `d x d` matrix. The core
/// contributes through an identity weight because it has no edge to itself.
pub fn ne_aggregate(
    tape: &mut Tape,
    store: &ParamStore,
    assign: &ClusterAssignment,
    x: Var,
    gated_edges: Var,
    params: &PoolParams,
    gamma: usize,
) -> Result<Var> {
    ne_aggregate_batch(tape, store, &[Placed::alone(assign)], x, gated_edges, params, gamma)
}

/// [`ne_aggregate`] over stacked graphs; `(B * gamma) x d`, graph-major.
pub fn ne_aggregate_batch(
    tape: &mut Tape,
    store: &ParamStore,
    graphs: &[Placed],
    x: Var,
    gated_edges: Var,
    params: &PoolParams,
    gamma: usize,
) -> Result<Var> {
    ne_aggregate_with(tape, store, graphs, x, params, gamma, |tape, rows| tape.gather_rows(gated_edges, rows))
}

/// [`ne_aggregate_batch`] where `select` produces the gated rows of the given
/// (batch-level) edge indices, so only edges inside clusters are gated.
pub(crate) fn ne_aggregate_with(
    tape: &mut Tape,
    store: &ParamStore,
    graphs: &[Placed],
    x: Var,
    params: &PoolParams,
    gamma: usize,
    select: impl FnOnce(&mut Tape, Vec<usize>) -> Result<Var>,
) -> Result<Var> {
    check_gamma(graphs, gamma)?;
    let d = tape.shape(x).1;
    if d != params.node_dim {
        return Err(Error::shape("aggregation node features", params.node_dim, d));
    }
    let mut edge_rows = Vec::new();
    let mut sources = Vec::new();
    let mut slots = Vec::new();
    let mut present = vec![0.0; graphs.len() * gamma];
    for (b, p) in graphs.iter().enumerate() {
        for (k, c) in p.assign.clusters.iter().enumerate() {
            edge_rows.extend(c.edges.iter().map(|e| p.edge_offset + e));
            sources.extend(c.regulars.iter().map(|v| p.node_offset + v));
            slots.extend(std::iter::repeat(b * gamma + k).take(c.regulars.len()));
            present[b * gamma + k] = 1.0;
        }
    }
    let rows = graphs.len() * gamma;
    let self_term = core_rows(tape, graphs, x, gamma)?;

    let wc = tape.param(store, params.wc);
    let wc_bias = tape.param(store, params.wc_bias);
    let l_sel = select(tape, edge_rows)?;
    let weights = tape.matmul(l_sel, wc)?;
    let weights = tape.add_row(weights, wc_bias)?;
    let x_sel = tape.gather_rows(x, sources)?;
    let msgs = tape.row_matvec(weights, x_sel)?;
    let msgs = tape.scatter_add_rows(msgs, slots, rows)?;

    let present = tape.constant(Tensor::column_vector(&present));
    let bc = tape.param(store, params.bc);
    let bias = tape.matmul(present, bc)?;

    let out = tape.add(self_term, msgs)?;
    tape.add(out, bias)
}

/// Each cluster is represented by its core's feature row.
pub fn feature_selection(tape: &mut Tape, assign: &ClusterAssignment, x: Var, gamma: usize) -> Result<Var> {
    feature_selection_batch(tape, &[Placed::alone(assign)], x, gamma)
}

pub fn feature_selection_batch(tape: &mut Tape, graphs: &[Placed], x: Var, gamma: usize) -> Result<Var> {
    check_gamma(graphs, gamma)?;
    core_rows(tape, graphs, x, gamma)
}

/// Each cluster is represented by the mean feature of its members.
pub fn readout_fully_connected(tape: &mut Tape, assign: &ClusterAssignment, x: Var, gamma: usize) -> Result<Var> {
    readout_fully_connected_batch(tape, &[Placed::alone(assign)], x, gamma)
}

pub fn readout_fully_connected_batch(tape: &mut Tape, graphs: &[Placed], x: Var, gamma: usize) -> Result<Var> {
    check_gamma(graphs, gamma)?;
    let mut members = Vec::new();
    let mut slots = Vec::new();
    let mut inv_size = vec![0.0; graphs.len() * gamma];
    for (b, p) in graphs.iter().enumerate() {
        for (k, c) in p.assign.clusters.iter().enumerate() {
            members.extend(c.members().map(|v| p.node_offset + v));
            slots.extend(std::iter::repeat(b * gamma + k).take(c.len()));
            inv_size[b * gamma + k] = 1.0 / c.len() as f64;
        }
    }
    let picked = tape.gather_rows(x, members)?;
    let sums = tape.scatter_add_rows(picked, slots, graphs.len() * gamma)?;
    let scale = tape.constant(Tensor::column_vector(&inv_size));
    tape.row_scale(sums, scale)
}
