//! Five-fold cross-validation on a planted-subnetwork dataset with the
//! default model, printing per-fold metrics and the loss curve of fold 0.
//!
//! cargo run --release --example train_planted -- 0 500 0.125

use ehcpool::synth::{gen_dataset, SynthSpec, WindowConfig};
use ehcpool::train::cross_validate;
use ehcpool::ModelConfig;

fn main() -> ehcpool::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed is an integer"));
    let epochs: usize = args.next().map_or(500, |s| s.parse().expect("epochs is an integer"));
    let strength: f64 = args.next().map_or(SynthSpec::default().strength, |s| s.parse().expect("strength is a number"));

    let spec = SynthSpec { seed, strength, ..SynthSpec::default() };
    let ds = gen_dataset(&spec, &WindowConfig::default())?;
    let mut cfg = ModelConfig::new(ds.node_dim, ds.edge_dim);
    cfg.filter_hidden = Some(4);
    cfg.epochs = epochs;
    cfg.repeats = 1;
    cfg.seed = seed;

    let cv = cross_validate(&ds, &cfg)?;
    for e in &cv.entries {
        let m = &e.metrics;
        println!("fold {}: ACC {:.3} SEN {:.3} SPE {:.3} F1 {:.3}", e.fold, m.acc, m.sen, m.spe, m.f1);
    }
    println!("mean ACC {:.4} ± {:.4}", cv.mean_acc(), cv.std_acc());
    let h = &cv.entries[0].loss_history;
    for epoch in (0..h.len()).step_by((h.len() / 10).max(1)) {
        println!("  epoch {:>4}  loss {:.4}", epoch + 1, h[epoch]);
    }
    Ok(())
}
