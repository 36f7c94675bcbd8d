//! One edge-conditioned convolution on a random graph, checked against a
//! direct per-node sum of filter-weighted messages.
//!
//! cargo run --release --example ecc_layer

use ehcpool::autodiff::{ParamStore, Tensor};
use ehcpool::ecc::{ecc_forward, EccLayer};
use ehcpool::graph::NeighborIndex;
use ehcpool::AttributedGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ehcpool::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, d, de, out) = (7, 3, 2, 4);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.4) {
                edges.push([i, j]);
            }
        }
    }
    let mut random = |r: usize, c: usize| Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let x = random(n, d)?;
    let l = random(edges.len(), de)?;
    let g = AttributedGraph::new(x, edges, l, None)?;
    let index = NeighborIndex::build(&g);

    let mut store = ParamStore::new();
    let layer = EccLayer::new(&mut store, "ecc", de, d, out, None, &mut rng);
    let y = ecc_forward(&layer, &store, &g, &index, &g.x)?;

    // h_i = mean over neighbours j of Theta(l_ij) x_j, plus the bias.
    let bias = store.get(layer.bias).clone();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let nb = index.neighbors(i);
        let mut h = bias.row(0).to_vec();
        for &(j, e) in nb {
            let theta = layer.filter_forward(&store, g.l.row(e))?;
            for (o, hv) in h.iter_mut().enumerate() {
                let m: f64 = (0..d).map(|k| theta.get(o, k) * g.x.get(j, k)).sum();
                *hv += m / nb.len() as f64;
            }
        }
        worst = h.iter().zip(y.row(i)).fold(worst, |w, (a, b)| w.max((a - b).abs()));
        println!("node {i} (degree {}): {:?}", nb.len(), y.row(i));
    }
    println!("max difference from the direct sum: {worst:.2e}");
    Ok(())
}
