//! Attributed graphs: node features, undirected edges with their own feature
//! vectors, neighbour indexing and the JSON-lines dataset format.
//!
//! Each undirected edge `{i, j}` is stored once, as one row of the edge list and
//! one row of the edge-feature matrix. [`NeighborIndex`] materialises both
//! directions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// A graph with `n` nodes carrying `d`-dimensional features and `M` undirected
/// edges carrying `d_e`-dimensional features.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    pub n: usize,
    /// `n x d`
    pub x: Tensor,
    /// `M x d_e`, row `e` belongs to `edges[e]`.
    pub l: Tensor,
    /// `[source, target]` per edge row.
    pub edges: Vec<[usize; 2]>,
    pub label: Option<u8>,
}

impl AttributedGraph {
    /// Builds and validates a graph.
    pub fn new(x: Tensor, edges: Vec<[usize; 2]>, l: Tensor, label: Option<u8>) -> Result<Self> {
        let g = AttributedGraph {
            n: x.rows(),
            x,
            l,
            edges,
            label,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn node_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn edge_dim(&self) -> usize {
        self.l.cols()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Checks every structural invariant. Errors name the offending row.
    pub fn validate(&self) -> Result<()> {
        if self.x.rows() != self.n {
            return Err(Error::shape(
                "node features",
                format!("{} rows", self.n),
                format!("{} rows", self.x.rows()),
            ));
        }
        if self.l.rows() != self.edges.len() {
            return Err(Error::shape(
                "edge features",
                format!("{} rows", self.edges.len()),
                format!("{} rows", self.l.rows()),
            ));
        }
        if let Some(label) = self.label {
            if label > 1 {
                return Err(Error::Config(format!("label must be 0 or 1, got {label}")));
            }
        }
        let mut seen: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.edges.len());
        for (e, &[i, j]) in self.edges.iter().enumerate() {
            for node in [i, j] {
                if node >= self.n {
                    return Err(Error::IndexOutOfRange {
                        edge: e,
                        node,
                        n: self.n,
                    });
                }
            }
            if i == j {
                return Err(Error::SelfLoop { edge: e, node: i });
            }
            if let Some(&first) = seen.get(&(i.min(j), i.max(j))) {
                return Err(Error::DuplicateEdge { edge: e, first });
            }
            seen.insert((i.min(j), i.max(j)), e);
        }
        for r in 0..self.x.rows() {
            if !self.x.row(r).iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "node features",
                    row: r,
                });
            }
        }
        for r in 0..self.l.rows() {
            if !self.l.row(r).iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "edge features",
                    row: r,
                });
            }
        }
        Ok(())
    }

    /// Applies a node relabeling `perm[old] = new`. Edge rows keep their order.
    pub fn relabel(&self, perm: &[usize]) -> AttributedGraph {
        assert_eq!(perm.len(), self.n);
        let mut x = Tensor::zeros(self.n, self.node_dim());
        for old in 0..self.n {
            x.row_mut(perm[old]).copy_from_slice(self.x.row(old));
        }
        AttributedGraph {
            n: self.n,
            x,
            l: self.l.clone(),
            edges: self.edges.iter().map(|&[i, j]| [perm[i], perm[j]]).collect(),
            label: self.label,
        }
    }
}

/// Free-function form of [`AttributedGraph::validate`].
pub fn validate_graph(g: &AttributedGraph) -> Result<()> {
    g.validate()
}

/// Incident `(neighbour, edge row)` pairs for every node, sorted ascending by
/// neighbour index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborIndex {
    lists: Vec<Vec<(usize, usize)>>,
}

impl NeighborIndex {
    pub fn build(g: &AttributedGraph) -> Self {
        let mut lists = vec![Vec::new(); g.n];
        for (e, &[i, j]) in g.edges.iter().enumerate() {
            lists[i].push((j, e));
            lists[j].push((i, e));
        }
        for list in &mut lists {
            list.sort_unstable();
        }
        NeighborIndex { lists }
    }

    pub fn num_nodes(&self) -> usize {
        self.lists.len()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.lists[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.lists[node].len()
    }

    pub fn total_incidences(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

pub fn build_neighbor_index(g: &AttributedGraph) -> NeighborIndex {
    NeighborIndex::build(g)
}

/// An ordered collection of graphs sharing `(d, d_e)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub graphs: Vec<AttributedGraph>,
    pub node_dim: usize,
    pub edge_dim: usize,
    /// Free-form provenance (generator seed, window config, ...). Stored in a
    /// `<file>.meta.json` sidecar next to the dataset.
    pub metadata: Option<serde_json::Value>,
}

impl GraphDataset {
    pub fn new(graphs: Vec<AttributedGraph>) -> Result<Self> {
        let (node_dim, edge_dim) = graphs
            .first()
            .map(|g| (g.node_dim(), g.edge_dim()))
            .unwrap_or((0, 0));
        for (i, g) in graphs.iter().enumerate() {
            g.validate()?;
            if g.node_dim() != node_dim || g.edge_dim() != edge_dim {
                return Err(Error::DimensionMismatch {
                    line: i + 1,
                    d: node_dim,
                    de: edge_dim,
                    got_d: g.node_dim(),
                    got_de: g.edge_dim(),
                });
            }
        }
        Ok(GraphDataset {
            graphs,
            node_dim,
            edge_dim,
            metadata: None,
        })
    }

    pub fn with_metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = Some(metadata);
        self
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.graphs.iter().all(|g| g.label.is_some())
    }

    pub fn labels(&self) -> Vec<Option<u8>> {
        self.graphs.iter().map(|g| g.label).collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    n: usize,
    d: usize,
    de: usize,
    x: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
    l: Vec<Vec<f64>>,
    label: Option<u8>,
}

pub fn metadata_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

fn push_number(out: &mut String, v: f64) {
    // 17 significant digits: enough to round-trip any finite f64.
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

fn push_matrix(out: &mut String, t: &Tensor) {
    out.push('[');
    for r in 0..t.rows() {
        if r > 0 {
            out.push(',');
        }
        out.push('[');
        for (c, &v) in t.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            push_number(out, v);
        }
        out.push(']');
    }
    out.push(']');
}

/// Serialises one graph as a single JSON object (no trailing newline).
pub fn graph_to_json_line(g: &AttributedGraph) -> String {
    let mut out = String::with_capacity(32 + 24 * (g.x.len() + g.l.len()));
    write!(
        out,
        "{{\"n\":{},\"d\":{},\"de\":{},\"x\":",
        g.n,
        g.node_dim(),
        g.edge_dim()
    )
    .unwrap();
    push_matrix(&mut out, &g.x);
    out.push_str(",\"edges\":[");
    for (e, [i, j]) in g.edges.iter().enumerate() {
        if e > 0 {
            out.push(',');
        }
        write!(out, "[{i},{j}]").unwrap();
    }
    out.push_str("],\"l\":");
    push_matrix(&mut out, &g.l);
    match g.label {
        Some(label) => write!(out, ",\"label\":{label}}}").unwrap(),
        None => out.push_str(",\"label\":null}"),
    }
    out
}

/// Parses one JSON-lines record. `line` is 1-based and only used in errors.
pub fn graph_from_json_line(text: &str, line: usize) -> Result<AttributedGraph> {
    let parse_err = |msg: String| Error::Parse { line, msg };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    if value.get("label").is_none() {
        return Err(parse_err("missing field `label`".into()));
    }
    let rec: GraphRecord = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
    if rec.x.len() != rec.n {
        return Err(parse_err(format!("\"x\" has {} rows, n = {}", rec.x.len(), rec.n)));
    }
    if rec.l.len() != rec.edges.len() {
        return Err(parse_err(format!(
            "\"l\" has {} rows for {} edges",
            rec.l.len(),
            rec.edges.len()
        )));
    }
    if rec.n == 0 {
        return Err(parse_err("n must be positive".into()));
    }
    if let Some(label) = rec.label {
        if label > 1 {
            return Err(parse_err(format!("label must be 0, 1 or null, got {label}")));
        }
    }
    let x = Tensor::from_rows(&rec.x, rec.d).map_err(|e| parse_err(e.to_string()))?;
    let l = Tensor::from_rows(&rec.l, rec.de).map_err(|e| parse_err(e.to_string()))?;
    AttributedGraph::new(x, rec.edges, l, rec.label).map_err(|e| parse_err(e.to_string()))
}

pub fn save_dataset(ds: &GraphDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for g in &ds.graphs {
        writeln!(w, "{}", graph_to_json_line(g)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta = metadata_path(path);
    match &ds.metadata {
        Some(m) => fs::write(&meta, serde_json::to_string_pretty(m)?).map_err(|e| Error::io(&meta, e))?,
        None if meta.exists() => fs::remove_file(&meta).map_err(|e| Error::io(&meta, e))?,
        None => {}
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<GraphDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut graphs = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    let mut labeled: Option<bool> = None;
    for (i, text) in BufReader::new(file).lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let g = graph_from_json_line(&text, line)?;
        let (d, de) = *dims.get_or_insert((g.node_dim(), g.edge_dim()));
        if (g.node_dim(), g.edge_dim()) != (d, de) {
            return Err(Error::DimensionMismatch {
                line,
                d,
                de,
                got_d: g.node_dim(),
                got_de: g.edge_dim(),
            });
        }
        let has_label = g.label.is_some();
        if *labeled.get_or_insert(has_label) != has_label {
            return Err(Error::Parse {
                line,
                msg: "dataset mixes labeled and unlabeled graphs".into(),
            });
        }
        graphs.push(g);
    }
    let (node_dim, edge_dim) = dims.unwrap_or((0, 0));
    let meta = metadata_path(path);
    let metadata = if meta.exists() {
        let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    Ok(GraphDataset {
        graphs,
        node_dim,
        edge_dim,
        metadata,
    })
}
