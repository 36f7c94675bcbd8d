//! Edge scores, edge gating and edge-to-node node scores.

use super::ScoreMode;
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// `φ_e = ⟨L(e), p1⟩ / max(‖p1‖, 1e-12)` for every edge row; `M x 1`.
pub fn edge_scores(tape: &mut Tape, l: Var, p1: Var) -> Result<Var> {
    let (_, de) = tape.shape(l);
    if tape.shape(p1) != (de, 1) {
        return Err(Error::shape("p1", format!("({de}, 1)"), format!("{:?}", tape.shape(p1))));
    }
    let proj = tape.matmul(l, p1)?;
    let norm = tape.l2_norm(p1)?;
    tape.div_scalar(proj, norm)
}

/// `L''(e) = L(e) · σ(φ_e)`, the scalar gate broadcast over the channels.
pub fn gate_edges(tape: &mut Tape, l: Var, phi_edges: Var) -> Result<Var> {
    let gate = tape.sigmoid(phi_edges)?;
    tape.row_scale(l, gate)
}

/// Node scores (`n x 1`). `edges` lists the endpoints of each edge row; every
/// undirected edge contributes its score once to each endpoint.
pub fn node_scores(
    tape: &mut Tape,
    x: Var,
    p2: Var,
    delta: f64,
    phi_edges: Var,
    edges: &[[usize; 2]],
    mode: ScoreMode,
) -> Result<Var> {
    let (n, d) = tape.shape(x);
    if tape.shape(phi_edges) != (edges.len(), 1) {
        return Err(Error::shape(
            "edge scores",
            format!("({}, 1)", edges.len()),
            format!("{:?}", tape.shape(phi_edges)),
        ));
    }
    let node_term = |tape: &mut Tape| -> Result<Var> {
        if tape.shape(p2) != (d, 1) {
            return Err(Error::shape("p2", format!("({d}, 1)"), format!("{:?}", tape.shape(p2))));
        }
        let proj = tape.matmul(x, p2)?;
        let norm = tape.l2_norm(p2)?;
        tape.div_scalar(proj, norm)
    };
    let edge_term = |tape: &mut Tape| -> Result<Var> {
        let m = edges.len();
        let rows: Vec<usize> = (0..m).chain(0..m).collect();
        let targets: Vec<usize> = edges.iter().map(|e| e[0]).chain(edges.iter().map(|e| e[1])).collect();
        let both = tape.gather_rows(phi_edges, rows)?;
        tape.scatter_add_rows(both, targets, n)
    };
    match mode {
        ScoreMode::NodeOnly => node_term(tape),
        ScoreMode::EdgeOnly => edge_term(tape),
        ScoreMode::EdgeToNode => {
            let nt = node_term(tape)?;
            let nt = tape.scale(nt, 1.0 - delta)?;
            let et = edge_term(tape)?;
            tape.add(nt, et)
        }
    }
}

/// Value-level edge scores.
pub fn edge_score_values(l: &Tensor, p1: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let lv = tape.constant(l.clone());
    let pv = tape.constant(Tensor::column_vector(p1));
    let phi = edge_scores(&mut tape, lv, pv)?;
    Ok(tape.value(phi).data().to_vec())
}

/// Value-level gated edge features.
pub fn gate_values(l: &Tensor, phi_edges: &[f64]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let lv = tape.constant(l.clone());
    let pv = tape.constant(Tensor::column_vector(phi_edges));
    let g = gate_edges(&mut tape, lv, pv)?;
    Ok(tape.value(g).clone())
}

/// Value-level node scores.
pub fn node_score_values(
    x: &Tensor,
    p2: &[f64],
    delta: f64,
    phi_edges: &[f64],
    edges: &[[usize; 2]],
    mode: ScoreMode,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let pv = tape.constant(Tensor::column_vector(p2));
    let ev = tape.constant(Tensor::column_vector(phi_edges));
    let phi = node_scores(&mut tape, xv, pv, delta, ev, edges, mode)?;
    Ok(tape.value(phi).data().to_vec())
}

/// Edge and node scores for a graph under stored pooling parameters.
pub fn score_graph(
    store: &ParamStore,
    params: &super::PoolParams,
    x: &Tensor,
    l: &Tensor,
    edges: &[[usize; 2]],
    cfg: &super::PoolConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let phi_e = edge_score_values(l, store.get(params.p1).data())?;
    let phi_v = node_score_values(x, store.get(params.p2).data(), cfg.delta, &phi_e, edges, cfg.score_mode)?;
    Ok((phi_e, phi_v))
}
