//! Compares the three node-scoring variants (edge-to-node, node-only,
//! edge-only) and identity pooling on the same planted dataset and folds.
//!
//! cargo run --release --example ablation -- 0 200 0.125

use ehcpool::model::Pooling;
use ehcpool::pool::ScoreMode;
use ehcpool::synth::{gen_dataset, SynthSpec, WindowConfig};
use ehcpool::train::cross_validate;
use ehcpool::ModelConfig;

fn main() -> ehcpool::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed is an integer"));
    let epochs: usize = args.next().map_or(200, |s| s.parse().expect("epochs is an integer"));
    let strength: f64 = args.next().map_or(SynthSpec::default().strength, |s| s.parse().expect("strength is a number"));

    let ds = gen_dataset(&SynthSpec { seed, strength, ..SynthSpec::default() }, &WindowConfig::default())?;
    let mut base = ModelConfig::new(ds.node_dim, ds.edge_dim);
    base.filter_hidden = Some(4);
    base.epochs = epochs;
    base.repeats = 1;
    base.seed = seed;

    for mode in [ScoreMode::EdgeToNode, ScoreMode::NodeOnly, ScoreMode::EdgeOnly] {
        let mut cfg = base.clone();
        cfg.pool.score_mode = mode;
        let cv = cross_validate(&ds, &cfg)?;
        println!("{:<12} ACC {:.4} ± {:.4}", format!("{mode:?}"), cv.mean_acc(), cv.std_acc());
    }
    let mut cfg = base;
    cfg.pooling = Pooling::Identity;
    let cv = cross_validate(&ds, &cfg)?;
    println!("{:<12} ACC {:.4} ± {:.4}", "Identity", cv.mean_acc(), cv.std_acc());
    Ok(())
}
