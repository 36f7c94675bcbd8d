//! Scores the four-node path fixture with unit projections, runs the greedy
//! clustering and prints each cluster and the pooled basis.
//!
//! cargo run --release --example toy_pooling -- 2 2

use ehcpool::autodiff::{ParamStore, Tensor};
use ehcpool::graph::NeighborIndex;
use ehcpool::pool::{pool_graph, PoolConfig, PoolParams};
use ehcpool::synth::gen_toy_graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ehcpool::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("gamma and cap are integers")).collect();
    let (gamma, cap) = (args.first().copied().unwrap_or(2), args.get(1).copied().unwrap_or(2));

    let g = gen_toy_graph("path4")?;
    let index = NeighborIndex::build(&g);
    let mut store = ParamStore::new();
    let params = PoolParams::new(&mut store, "pool", 1, 1, &mut ChaCha8Rng::seed_from_u64(0));
    *store.get_mut(params.p1) = Tensor::column_vector(&[1.0]);
    *store.get_mut(params.p2) = Tensor::column_vector(&[1.0]);

    let cfg = PoolConfig::with_cap(gamma, cap);
    let (pooled, scores) = pool_graph(&store, &g, &index, &g.x, &g.l, &params, &cfg)?;
    println!("edge scores {:?}", scores.phi_edges);
    println!("node scores {:?}", scores.phi_nodes);
    for (k, c) in pooled.assignment.clusters.iter().enumerate() {
        let edges: Vec<[usize; 2]> = c.edges.iter().map(|&e| g.edges[e]).collect();
        println!("cluster {k}: core {} regulars {:?} via {:?} -> basis {:?}", c.core, c.regulars, edges, pooled.basis.row(k));
    }
    for k in pooled.assignment.len()..gamma {
        println!("slot {k}: empty -> basis {:?}", pooled.basis.row(k));
    }
    Ok(())
}
