//! Edge-aware hard-clustering pooling.
//!
//! The operator runs in three stages:
//!
//! 1. **Scoring** ([`scores`]): every edge gets `φ_e = ⟨L(e), p1⟩ / ‖p1‖`, edge
//!    features are gated by `σ(φ_e)`, and every node gets the "edge-to-node"
//!    score `(1-δ) ⟨X(v), p2⟩ / ‖p2‖ + Σ_{e ∋ v} φ_e`.
//! 2. **Clustering** ([`cluster`]): a greedy loop picks the best unassigned node
//!    as a core, attaches up to `cap - 1` unassigned neighbours through its
//!    best-scoring edges, and removes all of them from further consideration.
//! 3. **Readout** ([`aggregate`]): each cluster becomes one basis vector; by
//!    default the core's feature plus edge-conditioned messages from its
//!    regular nodes.
//!
//! The discrete selection is constant under differentiation; gradients reach
//! `p1` through the edge gates and the aggregation weights.

pub mod aggregate;
pub mod cluster;
pub mod export;
pub mod scores;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NeighborIndex};
use crate::init::uniform_fan_in;

pub use aggregate::{
    feature_selection, feature_selection_batch, ne_aggregate, ne_aggregate_batch, readout_fully_connected,
    readout_fully_connected_batch, Placed,
};
pub use cluster::{iterate_n_top, Cluster, ClusterAssignment};
pub use export::{ClusterExport, ExportedCluster};
use aggregate::ne_aggregate_with;
use scores::gate_values;
pub use scores::{edge_scores, gate_edges, node_scores};

/// How node importance is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Projected node feature plus the sum of incident edge scores.
    #[default]
    EdgeToNode,
    /// Projected node feature only.
    NodeOnly,
    /// Sum of incident edge scores only.
    EdgeOnly,
}

/// How a cluster is turned into its basis vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    /// Core feature plus edge-conditioned messages from the regular nodes.
    #[default]
    NeAggregation,
    /// The core's feature, nothing aggregated.
    FeatureSelection,
    /// Mean of member features, edges ignored.
    FullyConnected,
}

/// Cluster size limit, either as the integer cap itself or as a node
/// retention ratio `β` realised as `⌈β n⌉`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSize {
    Cap(usize),
    Ratio(f64),
}

impl ClusterSize {
    pub fn cap(self, n: usize) -> usize {
        match self {
            ClusterSize::Cap(c) => c,
            ClusterSize::Ratio(beta) => ((beta * n as f64).ceil() as usize).max(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    /// Number of clusters to extract.
    pub gamma: usize,
    pub cluster_size: ClusterSize,
    /// Node-ignorance coefficient in `[0, 1]`.
    pub delta: f64,
    pub score_mode: ScoreMode,
    pub readout: ReadoutMode,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            gamma: 5,
            cluster_size: ClusterSize::Cap(3),
            delta: 0.0,
            score_mode: ScoreMode::EdgeToNode,
            readout: ReadoutMode::NeAggregation,
        }
    }
}

impl PoolConfig {
    pub fn with_cap(gamma: usize, cap: usize) -> Self {
        PoolConfig {
            gamma,
            cluster_size: ClusterSize::Cap(cap),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma == 0 {
            return Err(Error::Config("gamma must be at least 1".into()));
        }
        match self.cluster_size {
            ClusterSize::Cap(0) => return Err(Error::Config("cluster cap must be at least 1".into())),
            ClusterSize::Ratio(b) if !(b > 0.0 && b <= 1.0) => {
                return Err(Error::Config(format!("beta must lie in (0, 1], got {b}")))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1], got {}", self.delta)));
        }
        Ok(())
    }
}

/// Learnable pooling parameters: edge projection `p1` (`d_e x 1`), node
/// projection `p2` (`d x 1`), the edge-to-matrix map `Linear(L) = L w_c +
/// w_c_bias` (`d_e -> d*d`) and the basis bias `b_c` (`1 x d`).
#[derive(Clone, Debug)]
pub struct PoolParams {
    pub p1: ParamId,
    pub p2: ParamId,
    pub wc: ParamId,
    pub wc_bias: ParamId,
    pub bc: ParamId,
    pub node_dim: usize,
    pub edge_dim: usize,
}

impl PoolParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        node_dim: usize,
        edge_dim: usize,
        rng: &mut R,
    ) -> Self {
        let flat = node_dim * node_dim;
        PoolParams {
            p1: store.add(format!("{prefix}.p1"), uniform_fan_in(rng, edge_dim, 1, edge_dim)),
            p2: store.add(format!("{prefix}.p2"), uniform_fan_in(rng, node_dim, 1, node_dim)),
            wc: store.add(format!("{prefix}.wc"), uniform_fan_in(rng, edge_dim, flat, edge_dim)),
            wc_bias: store.add(format!("{prefix}.wc_bias"), uniform_fan_in(rng, 1, flat, edge_dim)),
            bc: store.add(format!("{prefix}.bc"), uniform_fan_in(rng, 1, node_dim, node_dim)),
            node_dim,
            edge_dim,
        }
    }
}

/// Scores and selection state of one pooling pass. `assigned` only ever flips
/// from false to true while clusters are formed.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreState {
    pub phi_edges: Vec<f64>,
    pub phi_nodes: Vec<f64>,
    pub gated_edges: Tensor,
    pub assigned: Vec<bool>,
}

/// Fixed-shape pooled output: `gamma x d`, one row per cluster in selection
/// order, zero rows when fewer than `gamma` clusters exist.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledGraph {
    pub basis: Tensor,
    pub assignment: ClusterAssignment,
}

/// Tape-level result of [`pool_forward`].
pub struct PoolOutput {
    /// `gamma x d`
    pub pooled: Var,
    pub assignment: ClusterAssignment,
    pub scores: ScoreState,
}

/// Tape-level result of [`pool_forward_batch`].
pub struct BatchPoolOutput {
    /// `(B * gamma) x d`, graph-major: rows `b * gamma ..` belong to graph `b`.
    pub pooled: Var,
    pub assignments: Vec<ClusterAssignment>,
    phi_edges: Var,
    phi_nodes: Var,
    edge_features: Var,
    node_ranges: Vec<std::ops::Range<usize>>,
    edge_ranges: Vec<std::ops::Range<usize>>,
}

impl BatchPoolOutput {
    /// Scores and selection state of graph `b`.
    pub fn scores(&self, tape: &Tape, b: usize) -> ScoreState {
        let (nr, er) = (self.node_ranges[b].clone(), self.edge_ranges[b].clone());
        let mut assigned = vec![false; nr.len()];
        for v in self.assignments[b].clusters.iter().flat_map(Cluster::members) {
            assigned[v] = true;
        }
        let l = tape.value(self.edge_features);
        let de = l.cols();
        let l = Tensor::from_vec(er.len(), de, l.data()[er.start * de..er.end * de].to_vec())
            .expect("row slice has the right length");
        let phi_edges = tape.value(self.phi_edges).data()[er].to_vec();
        ScoreState {
            gated_edges: gate_values(&l, &phi_edges).expect("one score per edge row"),
            phi_edges,
            phi_nodes: tape.value(self.phi_nodes).data()[nr].to_vec(),
            assigned,
        }
    }
}

/// Full pooling pass over one graph whose node features (`n x d`) and edge
/// features (`M x d_e`) are already on the tape.
pub fn pool_forward(
    tape: &mut Tape,
    store: &ParamStore,
    g: &AttributedGraph,
    index: &NeighborIndex,
    x: Var,
    l: Var,
    params: &PoolParams,
    cfg: &PoolConfig,
) -> Result<PoolOutput> {
    let mut out = pool_forward_batch(tape, store, &[(g, index)], x, l, params, cfg)?;
    let scores = out.scores(tape, 0);
    Ok(PoolOutput {
        pooled: out.pooled,
        assignment: out.assignments.pop().expect("one graph in, one assignment out"),
        scores,
    })
}

/// Pooling over a batch whose node rows (`x`) and edge rows (`l`) are the
/// graphs' rows stacked in order. Scoring and readout run once on the whole
/// batch; clustering runs per graph.
pub fn pool_forward_batch(
    tape: &mut Tape,
    store: &ParamStore,
    graphs: &[(&AttributedGraph, &NeighborIndex)],
    x: Var,
    l: Var,
    params: &PoolParams,
    cfg: &PoolConfig,
) -> Result<BatchPoolOutput> {
    cfg.validate()?;
    let mut node_ranges = Vec::with_capacity(graphs.len());
    let mut edge_ranges = Vec::with_capacity(graphs.len());
    let mut edges = Vec::new();
    let (mut n_total, mut m_total) = (0, 0);
    for (g, _) in graphs {
        if g.n == 0 {
            return Err(Error::EmptyGraph);
        }
        edges.extend(g.edges.iter().map(|[i, j]| [i + n_total, j + n_total]));
        node_ranges.push(n_total..n_total + g.n);
        edge_ranges.push(m_total..m_total + g.num_edges());
        n_total += g.n;
        m_total += g.num_edges();
    }
    if tape.shape(x) != (n_total, params.node_dim) || tape.shape(l) != (m_total, params.edge_dim) {
        return Err(Error::shape(
            "pool inputs",
            format!("x ({n_total}, {}), l ({m_total}, {})", params.node_dim, params.edge_dim),
            format!("x {:?}, l {:?}", tape.shape(x), tape.shape(l)),
        ));
    }
    let p1 = tape.param(store, params.p1);
    let p2 = tape.param(store, params.p2);
    // Full-batch scores only drive the discrete selection; the gradient reaches
    // p1 through the gated rows recomputed below for edges inside clusters.
    let phi_e = edge_scores(tape, l, p1)?;
    let phi_v = node_scores(tape, x, p2, cfg.delta, phi_e, &edges, cfg.score_mode)?;

    let mut assignments = Vec::with_capacity(graphs.len());
    {
        let (pe, pv) = (tape.value(phi_e).data(), tape.value(phi_v).data());
        for ((_, index), (nr, er)) in graphs.iter().zip(node_ranges.iter().zip(&edge_ranges)) {
            assignments.push(iterate_n_top(&pv[nr.clone()], &pe[er.clone()], index, cfg)?);
        }
    }
    let placed: Vec<Placed> = assignments
        .iter()
        .zip(node_ranges.iter().zip(&edge_ranges))
        .map(|(assign, (nr, er))| Placed {
            assign,
            node_offset: nr.start,
            edge_offset: er.start,
        })
        .collect();
    let pooled = match cfg.readout {
        ReadoutMode::NeAggregation => ne_aggregate_with(tape, store, &placed, x, params, cfg.gamma, |tape, rows| {
            let l_sel = tape.gather_rows(l, rows)?;
            let phi_sel = edge_scores(tape, l_sel, p1)?;
            gate_edges(tape, l_sel, phi_sel)
        })?,
        ReadoutMode::FeatureSelection => feature_selection_batch(tape, &placed, x, cfg.gamma)?,
        ReadoutMode::FullyConnected => readout_fully_connected_batch(tape, &placed, x, cfg.gamma)?,
    };
    Ok(BatchPoolOutput {
        pooled,
        assignments,
        phi_edges: phi_e,
        phi_nodes: phi_v,
        edge_features: l,
        node_ranges,
        edge_ranges,
    })
}

/// Value-level convenience around [`pool_forward`].
pub fn pool_graph(
    store: &ParamStore,
    g: &AttributedGraph,
    index: &NeighborIndex,
    x: &Tensor,
    l: &Tensor,
    params: &PoolParams,
    cfg: &PoolConfig,
) -> Result<(PooledGraph, ScoreState)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let lv = tape.constant(l.clone());
    let out = pool_forward(&mut tape, store, g, index, xv, lv, params, cfg)?;
    Ok((
        PooledGraph {
            basis: tape.value(out.pooled).clone(),
            assignment: out.assignment,
        },
        out.scores,
    ))
}
