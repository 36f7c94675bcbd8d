//! Trains on a full planted dataset, exports the clusters of every class-1
//! graph and reports how often each node is selected, and how often it is a
//! cluster core, next to the planted set.
//!
//! cargo run --release --example export_clusters -- 0 0.3

use ehcpool::model::prepare;
use ehcpool::pool::ClusterExport;
use ehcpool::synth::{gen_dataset, SynthSpec, WindowConfig};
use ehcpool::train::fit_full;
use ehcpool::ModelConfig;

fn main() -> ehcpool::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed is an integer"));
    let strength: f64 = args.next().map_or(0.3, |s| s.parse().expect("strength is a number"));
    let spec = SynthSpec { seed, strength, ..SynthSpec::default() };
    let ds = gen_dataset(&spec, &WindowConfig::default())?;
    let mut cfg = ModelConfig::new(ds.node_dim, ds.edge_dim);
    cfg.filter_hidden = Some(4);
    cfg.seed = seed;
    let (model, _) = fit_full(&ds, &cfg)?;

    let mut counts = vec![0usize; spec.nodes];
    let mut cores = vec![0usize; spec.nodes];
    let mut graphs = 0;
    for (i, g) in prepare(&ds.graphs).iter().enumerate() {
        if g.graph.label != Some(1) {
            continue;
        }
        let export = ClusterExport::new(i, &g.graph, &model.assign_clusters(g)?);
        if graphs == 0 {
            println!("{}", serde_json::to_string_pretty(&export).expect("exports serialize"));
        }
        graphs += 1;
        export.nodes().for_each(|v| counts[v] += 1);
        export.clusters.iter().for_each(|c| cores[c.core] += 1);
    }
    println!("planted nodes {:?}", spec.planted);
    println!("node     selected     core   (% of class-1 graphs)");
    for v in 0..spec.nodes {
        let mark = if spec.planted.contains(&v) { "*" } else { " " };
        let pct = |c: usize| 100.0 * c as f64 / graphs as f64;
        println!("{v:>4}{mark} {:10.1} {:8.1}", pct(counts[v]), pct(cores[v]));
    }
    Ok(())
}
