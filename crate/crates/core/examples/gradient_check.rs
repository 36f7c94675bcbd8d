//! Central-difference check of every trainable tensor of a small network on
//! one random graph, using batch-norm running statistics.
//!
//! cargo run --release --example gradient_check -- 3

use ehcpool::autodiff::{grad_check, ParamStore, Tensor};
use ehcpool::model::{Phase, PreparedGraph};
use ehcpool::{AttributedGraph, Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ehcpool::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed is an integer"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 6;
    let edges: Vec<[usize; 2]> = (0..n).flat_map(|i| (i + 1..n).map(move |j| [i, j])).filter(|_| rng.gen_bool(0.5)).collect();
    let mut random = |r: usize, c: usize| Tensor::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let (x, l) = (random(n, 3)?, random(edges.len(), 2)?);
    let g = PreparedGraph::new(AttributedGraph::new(x, edges, l, Some(1))?);

    let mut cfg = ModelConfig::new(3, 2);
    cfg.conv_dims = [4, 4];
    cfg.seed = seed;
    let model = Model::build(&cfg)?;
    let report = grad_check(&model.store, 1e-5, |store: &ParamStore, tape| {
        let out = model.forward_with(tape, store, &[&g], Phase::Eval)?;
        tape.bce_with_logits(out.logits, &[1.0])
    })?;
    for p in &report.params {
        let (i, a, num) = p.worst;
        println!("{:<24} max rel error {:.2e}  (entry {i}: analytic {a:+.6e}, numeric {num:+.6e})", p.name, p.max_rel_error);
    }
    println!("overall {:.2e}", report.max_rel_error);
    Ok(())
}
