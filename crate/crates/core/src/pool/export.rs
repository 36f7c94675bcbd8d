use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClusterAssignment;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedCluster {
    pub core: usize,
    pub regulars: Vec<usize>,
    /// Retained star edges as `[core, regular]` pairs.
    pub edges: Vec<[usize; 2]>,
}

/// Cluster assignment of one graph, in the export JSON layout
/// `{"graph_id": .., "clusters": [{"core": i, "regulars": [..], "edges": [[i, j], ..]}, ..]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterExport {
    pub graph_id: usize,
    pub clusters: Vec<ExportedCluster>,
}

impl ClusterExport {
    pub fn new(graph_id: usize, g: &AttributedGraph, assign: &ClusterAssignment) -> Self {
        let clusters = assign
            .clusters
            .iter()
            .map(|c| ExportedCluster {
                core: c.core,
                regulars: c.regulars.clone(),
                edges: c
                    .edges
                    .iter()
                    .zip(&c.regulars)
                    .map(|(&e, &j)| {
                        debug_assert!(g.edges[e].contains(&c.core) && g.edges[e].contains(&j));
                        [c.core, j]
                    })
                    .collect(),
            })
            .collect();
        ClusterExport { graph_id, clusters }
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.clusters
            .iter()
            .flat_map(|c| std::iter::once(c.core).chain(c.regulars.iter().copied()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}
