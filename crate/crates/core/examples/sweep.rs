//! Grid over cluster count and cluster cap, printed as an accuracy table.
//!
//! cargo run --release --example sweep -- 100

use ehcpool::synth::{gen_dataset, SynthSpec, WindowConfig};
use ehcpool::train::sensitivity_sweep;
use ehcpool::ModelConfig;

fn main() -> ehcpool::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(100, |s| s.parse().expect("epochs is an integer"));
    let ds = gen_dataset(&SynthSpec::default(), &WindowConfig::default())?;
    let mut cfg = ModelConfig::new(ds.node_dim, ds.edge_dim);
    cfg.filter_hidden = Some(4);
    cfg.epochs = epochs;
    cfg.repeats = 1;

    let (gammas, caps) = ([1, 3, 5, 7], [2, 3, 4]);
    let cells = sensitivity_sweep(&ds, &gammas, &caps, &cfg)?;
    print!("gamma\\cap");
    for c in caps {
        print!("  {c:>6}");
    }
    for g in gammas {
        print!("\n{g:>9}");
        for cell in cells.iter().filter(|c| c.gamma == g) {
            print!("  {:6.3}", cell.summary.mean_acc());
        }
    }
    println!();
    Ok(())
}
