//! Independent references and fixtures shared by the integration tests.
//! Nothing here calls into the library's pooling or scoring code.

#![allow(dead_code)]

use ehcpool::autodiff::Tensor;
use ehcpool::pool::ScoreMode;
use ehcpool::AttributedGraph;
use rand::Rng;

pub fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Erdős–Rényi edges in a random order with random orientation.
pub fn random_edges<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<[usize; 2]> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push(if rng.gen_bool(0.5) { [i, j] } else { [j, i] });
            }
        }
    }
    shuffle(rng, &mut edges);
    edges
}

/// A random spanning tree plus Erdős–Rényi extras.
pub fn random_connected_edges<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<[usize; 2]> {
    let mut have = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        have[u][v] = true;
        edges.push([u, v]);
    }
    for i in 0..n {
        for j in i + 1..n {
            if !have[i][j] && rng.gen_bool(p) {
                edges.push([j, i]);
            }
        }
    }
    shuffle(rng, &mut edges);
    edges
}

pub fn shuffle<T, R: Rng>(rng: &mut R, v: &mut [T]) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
}

pub fn random_graph<R: Rng>(rng: &mut R, n: usize, edges: Vec<[usize; 2]>, d: usize, de: usize) -> AttributedGraph {
    let m = edges.len();
    AttributedGraph::new(random_tensor(rng, n, d), edges, random_tensor(rng, m, de), Some(rng.gen_range(0..2))).unwrap()
}

/// Every connected simple graph on `n` labelled nodes, edges listed in
/// lexicographic order.
pub fn connected_graphs(n: usize) -> Vec<Vec<[usize; 2]>> {
    let pairs: Vec<[usize; 2]> = (0..n).flat_map(|i| (i + 1..n).map(move |j| [i, j])).collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        let edges: Vec<[usize; 2]> =
            pairs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &e)| e).collect();
        if is_connected(n, &edges) {
            out.push(edges);
        }
    }
    out
}

fn is_connected(n: usize, edges: &[[usize; 2]]) -> bool {
    let mut comp: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], mut v: usize) -> usize {
        while c[v] != v {
            v = c[v];
        }
        v
    }
    for &[i, j] in edges {
        let (a, b) = (root(&mut comp, i), root(&mut comp, j));
        comp[a] = b;
    }
    let r = root(&mut comp, 0);
    (0..n).all(|v| root(&mut comp, v) == r)
}

/// `(core, regulars, edge rows)` per cluster, in formation order.
pub type OracleCluster = (usize, Vec<usize>, Vec<usize>);

/// Greedy clustering simulated directly on the edge list: each round rescans
/// every node and every edge.
pub fn brute_force_greedy(
    n: usize,
    edges: &[[usize; 2]],
    phi_v: &[f64],
    phi_e: &[f64],
    gamma: usize,
    cap: usize,
) -> Vec<OracleCluster> {
    let mut taken = vec![false; n];
    let mut out = Vec::new();
    while out.len() < gamma {
        let mut free: Vec<usize> = (0..n).filter(|&v| !taken[v]).collect();
        if free.is_empty() {
            break;
        }
        // Highest score first; a stable sort keeps the lower index on ties.
        free.sort_by(|&a, &b| phi_v[b].partial_cmp(&phi_v[a]).unwrap());
        let core = free[0];
        taken[core] = true;
        let mut cand: Vec<(usize, usize)> = Vec::new();
        for (e, &[i, j]) in edges.iter().enumerate() {
            let other = if i == core {
                j
            } else if j == core {
                i
            } else {
                continue;
            };
            if !taken[other] {
                cand.push((e, other));
            }
        }
        cand.sort_by(|a, b| phi_e[b.0].partial_cmp(&phi_e[a.0]).unwrap());
        cand.truncate(cap - 1);
        for &(_, v) in &cand {
            taken[v] = true;
        }
        out.push((core, cand.iter().map(|c| c.1).collect(), cand.iter().map(|c| c.0).collect()));
    }
    out
}

/// Straight-line edge scores: dot product over the norm.
pub fn ref_edge_scores(l: &Tensor, p1: &[f64]) -> Vec<f64> {
    let norm = p1.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    (0..l.rows())
        .map(|e| l.row(e).iter().zip(p1).map(|(a, b)| a * b).sum::<f64>() / norm)
        .collect()
}

pub fn ref_gate(l: &Tensor, phi_e: &[f64]) -> Tensor {
    let mut out = l.clone();
    for (e, &s) in phi_e.iter().enumerate() {
        let g = 1.0 / (1.0 + (-s).exp());
        for v in out.row_mut(e) {
            *v *= g;
        }
    }
    out
}

pub fn ref_node_scores(
    x: &Tensor,
    p2: &[f64],
    delta: f64,
    phi_e: &[f64],
    edges: &[[usize; 2]],
    mode: ScoreMode,
) -> Vec<f64> {
    let norm = p2.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    (0..x.rows())
        .map(|v| {
            let own = x.row(v).iter().zip(p2).map(|(a, b)| a * b).sum::<f64>() / norm;
            let incident: f64 = edges
                .iter()
                .zip(phi_e)
                .filter(|(e, _)| e[0] == v || e[1] == v)
                .map(|(_, s)| s)
                .sum();
            match mode {
                ScoreMode::NodeOnly => own,
                ScoreMode::EdgeOnly => incident,
                ScoreMode::EdgeToNode => (1.0 - delta) * own + incident,
            }
        })
        .collect()
}
