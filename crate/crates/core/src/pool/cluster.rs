//! Greedy hard clustering ("iteration n-top").

use serde::{Deserialize, Serialize};

use super::PoolConfig;
use crate::error::{Error, Result};
use crate::graph::NeighborIndex;

/// One hard cluster: a core node and the regular nodes attached to it through
/// the retained star edges (`regulars[r]` is reached via edge row `edges[r]`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub core: usize,
    pub regulars: Vec<usize>,
    pub edges: Vec<usize>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        1 + self.regulars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Core first, then regular nodes in selection order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.core).chain(self.regulars.iter().copied())
    }
}

/// Clusters in the order they were formed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub clusters: Vec<Cluster>,
}

impl ClusterAssignment {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn num_assigned(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    pub fn covered_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.clusters.iter().flat_map(Cluster::members).collect();
        v.sort_unstable();
        v
    }
}

/// Greedy loop, at most `gamma` rounds:
///
/// - core = unassigned node with the largest score (ties: lowest index);
/// - among the core's edges to unassigned neighbours, keep the `cap - 1` with
///   the largest edge score (ties: lowest edge row); their far endpoints
///   become the regular nodes;
/// - core and regulars are marked assigned and never considered again.
///
/// Stops early once every node is assigned. Assigned nodes are excluded by
/// an explicit mask rather than by zeroing their scores, so negative scores
/// are handled correctly.
pub fn iterate_n_top(
    phi_nodes: &[f64],
    phi_edges: &[f64],
    index: &NeighborIndex,
    cfg: &PoolConfig,
) -> Result<ClusterAssignment> {
    let n = index.num_nodes();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if phi_nodes.len() != n {
        return Err(Error::shape("node scores", n, phi_nodes.len()));
    }
    cfg.validate()?;
    let cap = cfg.cluster_size.cap(n);
    let mut assigned = vec![false; n];
    let mut clusters = Vec::with_capacity(cfg.gamma.min(n));
    let mut candidates: Vec<(usize, usize)> = Vec::new();

    for _ in 0..cfg.gamma {
        let mut core = None;
        for (v, &s) in phi_nodes.iter().enumerate() {
            if assigned[v] {
                continue;
            }
            match core {
                Some((_, best)) if s <= best => {}
                _ => core = Some((v, s)),
            }
        }
        let Some((core, _)) = core else { break };
        assigned[core] = true;

        candidates.clear();
        for &(j, e) in index.neighbors(core) {
            if e >= phi_edges.len() {
                return Err(Error::shape("edge scores", format!("> {e} entries"), phi_edges.len()));
            }
            if !assigned[j] {
                candidates.push((j, e));
            }
        }
        candidates.sort_by(|a, b| phi_edges[b.1].total_cmp(&phi_edges[a.1]).then(a.1.cmp(&b.1)));
        candidates.truncate(cap - 1);

        let mut cluster = Cluster {
            core,
            regulars: Vec::with_capacity(candidates.len()),
            edges: Vec::with_capacity(candidates.len()),
        };
        for &(j, e) in &candidates {
            assigned[j] = true;
            cluster.regulars.push(j);
            cluster.edges.push(e);
        }
        clusters.push(cluster);
    }
    Ok(ClusterAssignment { clusters })
}
