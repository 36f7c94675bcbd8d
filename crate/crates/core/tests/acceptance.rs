//! Acceptance gate: runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 2 3`.

mod common;

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use ehcpool::autodiff::{grad_check, ParamStore, Tensor};
use ehcpool::ecc::{ecc_forward, EccLayer};
use ehcpool::graph::{load_dataset, save_dataset, NeighborIndex};
use ehcpool::metrics::wilson_interval;
use ehcpool::model::{prepare, Phase, PreparedGraph};
use ehcpool::pool::export::ClusterExport;
use ehcpool::pool::scores::{edge_score_values, gate_values, node_score_values};
use ehcpool::pool::{iterate_n_top, ClusterAssignment, ClusterSize, PoolConfig, ScoreMode};
use ehcpool::synth::probe::{probe_accuracy, ProbeConfig};
use ehcpool::synth::{gen_dataset, SynthSpec, WindowConfig};
use ehcpool::train::{cross_validate, fit_full, CvSummary};
use ehcpool::{AttributedGraph, GraphDataset, Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Violations of the hard-partition contract, as messages.
fn partition_violations(a: &ClusterAssignment, g: &AttributedGraph, gamma: usize, cap: usize) -> Vec<String> {
    let mut out = Vec::new();
    if a.len() > gamma {
        out.push(format!("{} clusters > gamma {gamma}", a.len()));
    }
    let mut owner = vec![None; g.n];
    let mut cores = Vec::new();
    for (k, c) in a.clusters.iter().enumerate() {
        if c.len() > cap {
            out.push(format!("cluster {k} has {} nodes > cap {cap}", c.len()));
        }
        if cores.contains(&c.core) {
            out.push(format!("core {} repeated", c.core));
        }
        cores.push(c.core);
        for v in c.members() {
            if let Some(prev) = owner[v].replace(k) {
                out.push(format!("node {v} in clusters {prev} and {k}"));
            }
        }
        for (&j, &e) in c.regulars.iter().zip(&c.edges) {
            let [s, t] = g.edges[e];
            if !((s == c.core && t == j) || (t == c.core && s == j)) {
                out.push(format!("edge row {e} does not join core {} and {j}", c.core));
            }
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut violations = Vec::new();
    for trial in 0..1000 {
        let n = rng.gen_range(2..=200);
        // Sparse to dense, including graphs with isolated nodes.
        let p = rng.gen_range(0.0..1.0f64).powi(3);
        let edges = random_edges(&mut rng, n, p);
        let m = edges.len();
        let g = AttributedGraph::new(Tensor::zeros(n, 1), edges, Tensor::zeros(m, 1), None).unwrap();
        let idx = NeighborIndex::build(&g);
        let phi_v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let phi_e: Vec<f64> = (0..g.num_edges()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let gamma = rng.gen_range(1..=12);
        let size = if rng.gen_bool(0.5) {
            ClusterSize::Cap(rng.gen_range(1..=10))
        } else {
            ClusterSize::Ratio(rng.gen_range(0.01..=1.0))
        };
        let cfg = PoolConfig {
            gamma,
            cluster_size: size,
            ..Default::default()
        };
        let a = iterate_n_top(&phi_v, &phi_e, &idx, &cfg).unwrap();
        for v in partition_violations(&a, &g, gamma, size.cap(n)) {
            violations.push(format!("trial {trial}: {v}"));
        }
    }
    let t = start.elapsed();
    outcome(
        violations.is_empty() && t < Duration::from_secs(30),
        format!("1000 graphs, {} violations{}, {:.2}s (limit 30s)", violations.len(), first(&violations), secs(t)),
    )
}

fn first(v: &[String]) -> String {
    v.first().map(|s| format!(" (first: {s})")).unwrap_or_default()
}

fn oracle_matches(rng: &mut ChaCha8Rng, n: usize, edges: Vec<[usize; 2]>) -> Result<(), String> {
    let m = edges.len();
    let g = AttributedGraph::new(Tensor::zeros(n, 1), edges, Tensor::zeros(m, 1), None).unwrap();
    let idx = NeighborIndex::build(&g);
    let tied = rng.gen_bool(0.5);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| if tied { f64::from(rng.gen_range(-1..2)) } else { rng.gen_range(-3.0..3.0) })
            .collect()
    };
    let (pv, pe) = (draw(n), draw(m));
    let gamma = rng.gen_range(1..=n + 1);
    let cap = rng.gen_range(1..=n);
    let got = iterate_n_top(&pv, &pe, &idx, &PoolConfig::with_cap(gamma, cap)).unwrap();
    let got: Vec<OracleCluster> = got.clusters.iter().map(|c| (c.core, c.regulars.clone(), c.edges.clone())).collect();
    let want = brute_force_greedy(n, &g.edges, &pv, &pe, gamma, cap);
    if got == want {
        Ok(())
    } else {
        Err(format!("n={n} edges={:?} gamma={gamma} cap={cap}: got {got:?}, oracle {want:?}", g.edges))
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut mismatches = Vec::new();
    let mut catalog = 0;
    for n in 1..=6 {
        for edges in connected_graphs(n) {
            catalog += 1;
            if let Err(e) = oracle_matches(&mut rng, n, edges) {
                mismatches.push(e);
            }
        }
    }
    for _ in 0..500 {
        let n = rng.gen_range(1..=12);
        let p = rng.gen_range(0.0..1.0);
        let edges = random_edges(&mut rng, n, p);
        if let Err(e) = oracle_matches(&mut rng, n, edges) {
            mismatches.push(e);
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{catalog} connected graphs (n<=6) + 500 random (n<=12), {} mismatches{}", mismatches.len(), first(&mismatches)),
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut track = |got: &[f64], want: &[f64]| {
        for (a, b) in got.iter().zip(want) {
            worst = worst.max((a - b).abs());
        }
    };
    // Worked values: <(1,2),(3,4)>/5 = 2.2; node 0 sees edges scoring 2.2 and 0.6.
    let l = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.6, 0.0]], 2).unwrap();
    let phi_e = edge_score_values(&l, &[3.0, 4.0]).unwrap();
    let worked_e = (phi_e[0] - 2.2).abs();
    let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]], 2).unwrap();
    let edges = [[0, 1], [2, 0]];
    let phi_v = node_score_values(&x, &[0.0, 2.0], 0.0, &[2.2, 0.6], &edges, ScoreMode::EdgeToNode).unwrap();
    let worked_v = (phi_v[0] - 2.8).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    for _ in 0..200 {
        let n = rng.gen_range(1..30);
        let (d, de) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let p = rng.gen_range(0.0..1.0);
        let edges = random_edges(&mut rng, n, p);
        let g = random_graph(&mut rng, n, edges, d, de);
        let scale = 10f64.powi(rng.gen_range(-2..3));
        let p1: Vec<f64> = (0..de).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let p2: Vec<f64> = (0..d).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let delta = rng.gen_range(0.0..=1.0);
        let pe = edge_score_values(&g.l, &p1).unwrap();
        track(&pe, &ref_edge_scores(&g.l, &p1));
        track(gate_values(&g.l, &pe).unwrap().data(), ref_gate(&g.l, &pe).data());
        for mode in [ScoreMode::EdgeToNode, ScoreMode::NodeOnly, ScoreMode::EdgeOnly] {
            let pv = node_score_values(&g.x, &p2, delta, &pe, &g.edges, mode).unwrap();
            track(&pv, &ref_node_scores(&g.x, &p2, delta, &pe, &g.edges, mode));
        }
    }
    outcome(
        worst <= 1e-12 && worked_e <= 1e-12 && worked_v <= 1e-12,
        format!("200 instances, max abs error {worst:.2e}; worked φ_e=2.2 off by {worked_e:.1e}, φ_v=2.8 off by {worked_v:.1e}"),
    )
}

/// Worst relative error per trainable tensor over 20 random 6-node graphs.
fn full_network_check(phase: Phase) -> Vec<(String, f64, (usize, f64, f64))> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let mut worst: Vec<(String, f64, (usize, f64, f64))> = Vec::new();
    for trial in 0..20 {
        let p = rng.gen_range(0.3..0.8);
        let edges = random_edges(&mut rng, 6, p);
        let g = random_graph(&mut rng, 6, edges, 3, 2);
        let y = f64::from(g.label.unwrap());
        let mut cfg = ModelConfig::new(3, 2);
        cfg.conv_dims = [4, 4];
        cfg.seed = trial;
        let model = Model::build(&cfg).unwrap();
        let pg = PreparedGraph::new(g);
        let report = grad_check(&model.store, 1e-5, |store: &ParamStore, tape| {
            let out = model.forward_with(tape, store, &[&pg], phase)?;
            tape.bce_with_logits(out.logits, &[y])
        })
        .unwrap();
        for pc in report.params {
            match worst.iter_mut().find(|w| w.0 == pc.name) {
                Some(w) if w.1 >= pc.max_rel_error => {}
                Some(w) => *w = (pc.name, pc.max_rel_error, pc.worst),
                None => worst.push((pc.name, pc.max_rel_error, pc.worst)),
            }
        }
    }
    worst
}

fn criterion_4() -> Outcome {
    // Batch statistics cancel the convolution biases exactly, so in the
    // training phase their gradient is zero and the relative error only sees
    // rounding noise. The running-statistics phase gives every tensor a real
    // gradient; the training phase is reported alongside.
    let start = Instant::now();
    let eval = full_network_check(Phase::Eval);
    let t = start.elapsed();
    let max = eval.iter().map(|w| w.1).fold(0.0, f64::max);
    let bad: Vec<String> = eval.iter().filter(|w| w.1 > 1e-4).map(|w| format!("{} {:.1e}", w.0, w.1)).collect();

    let train = full_network_check(Phase::Train);
    for (name, err, (_, a, n)) in train.iter().filter(|w| w.1 > 1e-4) {
        println!("    training phase: {name} rel error {err:.1e} at analytic {a:.1e}, numeric {n:.1e}");
    }
    let rest = train.iter().filter(|w| w.1 <= 1e-4).map(|w| w.1).fold(0.0, f64::max);
    println!("    training phase: every other tensor within {rest:.2e}");

    outcome(
        bad.is_empty() && t < Duration::from_secs(120),
        format!(
            "20 graphs, {} tensors, max rel error {max:.2e}{}, {:.1}s (limit 120s)",
            eval.len(),
            if bad.is_empty() { String::new() } else { format!(" over 1e-4: {}", bad.join(", ")) },
            secs(t)
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let (mut a_bad, mut b_bad, mut c_bad) = (0, 0, 0);
    let mut b_worst: f64 = 0.0;
    for _ in 0..200 {
        // (a) positive rescaling of every score.
        let n = rng.gen_range(1..60);
        let p = rng.gen_range(0.0..0.5);
        let edges = random_edges(&mut rng, n, p);
        let g = random_graph(&mut rng, n, edges, 1, 1);
        let idx = NeighborIndex::build(&g);
        let pv: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pe: Vec<f64> = (0..g.num_edges()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let c = 10f64.powf(rng.gen_range(-3.0..3.0));
        let cfg = PoolConfig::with_cap(rng.gen_range(1..8), rng.gen_range(1..6));
        let sv: Vec<f64> = pv.iter().map(|v| v * c).collect();
        let se: Vec<f64> = pe.iter().map(|v| v * c).collect();
        if iterate_n_top(&pv, &pe, &idx, &cfg).unwrap() != iterate_n_top(&sv, &se, &idx, &cfg).unwrap() {
            a_bad += 1;
        }

        // (b) p1 -> c p1.
        let de = rng.gen_range(1..10);
        let l = random_tensor(&mut rng, 40, de);
        let p1: Vec<f64> = (0..de).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = p1.iter().map(|v| v * c).collect();
        let (x, y) = (edge_score_values(&l, &p1).unwrap(), edge_score_values(&l, &scaled).unwrap());
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        b_worst = b_worst.max(err);
        if err > 1e-12 {
            b_bad += 1;
        }

        // (c) relabeling: convolution output rows and cluster node sets move with the labels.
        let n = rng.gen_range(1..25);
        let p = rng.gen_range(0.0..0.7);
        let edges = random_edges(&mut rng, n, p);
        let g = random_graph(&mut rng, n, edges, 3, 2);
        let mut perm: Vec<usize> = (0..n).collect();
        shuffle(&mut rng, &mut perm);
        let h = g.relabel(&perm);
        let (gi, hi) = (NeighborIndex::build(&g), NeighborIndex::build(&h));
        let mut store = ParamStore::new();
        let layer = EccLayer::new(&mut store, "ecc", 2, 3, 4, None, &mut rng);
        let og = ecc_forward(&layer, &store, &g, &gi, &g.x).unwrap();
        let oh = ecc_forward(&layer, &store, &h, &hi, &h.x).unwrap();
        let mut ok = (0..n).all(|v| og.row(v) == oh.row(perm[v]));
        let pv: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pe: Vec<f64> = (0..g.num_edges()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut hv = vec![0.0; n];
        for v in 0..n {
            hv[perm[v]] = pv[v];
        }
        let cfg = PoolConfig::with_cap(rng.gen_range(1..8), rng.gen_range(1..6));
        let ag = iterate_n_top(&pv, &pe, &gi, &cfg).unwrap();
        let ah = iterate_n_top(&hv, &pe, &hi, &cfg).unwrap();
        let sets = |a: &ClusterAssignment, map: &dyn Fn(usize) -> usize| -> Vec<Vec<usize>> {
            a.clusters
                .iter()
                .map(|c| {
                    let mut s: Vec<usize> = c.members().map(map).collect();
                    s.sort_unstable();
                    s
                })
                .collect()
        };
        ok &= sets(&ag, &|v| perm[v]) == sets(&ah, &|v| v);
        if !ok {
            c_bad += 1;
        }
    }
    outcome(
        a_bad + b_bad + c_bad == 0,
        format!(
            "200 trials each: (a) rescaling {a_bad} violations, (b) p1 scaling {b_bad} (max diff {b_worst:.1e}), (c) relabeling {c_bad}"
        ),
    )
}

/// The edge-signal dataset for seed `s`: 16 nodes, 100 graphs per class,
/// planted triangle, default strength.
fn planted(seed: u64) -> GraphDataset {
    let spec = SynthSpec {
        seed,
        ..Default::default()
    };
    gen_dataset(&spec, &WindowConfig::default()).unwrap()
}

/// The acceptance model: default hyper-parameters (γ = 5, cap 3, lr 1e-3,
/// 500 epochs, 5 folds) with a 4-wide filter network; one CV round per seed.
fn acceptance_cfg(ds: &GraphDataset, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::new(ds.node_dim, ds.edge_dim);
    cfg.filter_hidden = Some(4);
    cfg.pool = PoolConfig::with_cap(5, 3);
    cfg.repeats = 1;
    cfg.seed = seed;
    cfg
}

struct PlantedRun {
    accs: Vec<f64>,
    elapsed: Duration,
    decreasing: usize,
}

fn run_planted(mode: ScoreMode) -> PlantedRun {
    let start = Instant::now();
    let mut accs = Vec::new();
    let mut decreasing = 0;
    for s in 0..SEEDS {
        let ds = planted(s);
        let mut cfg = acceptance_cfg(&ds, s);
        cfg.pool.score_mode = mode;
        let cv: CvSummary = cross_validate(&ds, &cfg).unwrap();
        let h = &cv.entries[0].loss_history;
        decreasing += usize::from(h[49] < h[0]);
        println!("    seed {s}: {mode:?} ACC {:.4} (folds {:?})", cv.mean_acc(), fold_accs(&cv));
        accs.push(cv.mean_acc());
    }
    PlantedRun {
        accs,
        elapsed: start.elapsed(),
        decreasing,
    }
}

fn fold_accs(cv: &CvSummary) -> Vec<f64> {
    cv.entries.iter().map(|e| e.metrics.acc).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn full_run() -> &'static PlantedRun {
    static RUN: OnceLock<PlantedRun> = OnceLock::new();
    RUN.get_or_init(|| run_planted(ScoreMode::EdgeToNode))
}

/// The same dataset restricted to the planted edges: a probe on it knows
/// exactly where the signal is, which bounds what any model can extract.
fn planted_edges_only(ds: &GraphDataset, planted: &[usize]) -> GraphDataset {
    let graphs = ds
        .graphs
        .iter()
        .map(|g| {
            let rows: Vec<usize> = (0..g.num_edges())
                .filter(|&e| g.edges[e].iter().all(|v| planted.contains(v)))
                .collect();
            let l = Tensor::from_rows(&rows.iter().map(|&e| g.l.row(e).to_vec()).collect::<Vec<_>>(), g.edge_dim()).unwrap();
            let edges = rows.iter().map(|&e| g.edges[e]).collect();
            AttributedGraph::new(g.x.clone(), edges, l, g.label).unwrap()
        })
        .collect();
    GraphDataset::new(graphs).unwrap()
}

fn criterion_6() -> Outcome {
    let planted_nodes = SynthSpec::default().planted;
    let probe = ProbeConfig::default();
    let (mut probes, mut oracles) = (Vec::new(), Vec::new());
    for s in 0..SEEDS {
        let ds = planted(s);
        probes.push(probe_accuracy(&ds, &probe).unwrap());
        oracles.push(probe_accuracy(&planted_edges_only(&ds, &planted_nodes), &probe).unwrap());
    }
    println!("    linear probe on all edges per seed: {probes:.3?} (mean {:.3})", mean(&probes));
    println!("    linear probe on the planted edges only: {oracles:.3?} (mean {:.3})", mean(&oracles));
    let run = full_run();
    let acc = mean(&run.accs);
    println!(
        "    training loss lower at epoch 50 than at epoch 1 in {}/{} seeds",
        run.decreasing, SEEDS
    );
    outcome(
        acc >= 0.90 && run.elapsed < Duration::from_secs(600),
        format!(
            "mean 5-fold ACC {acc:.4} over {SEEDS} seeds (need >= 0.90), probe {:.3}, {:.0}s (limit 600s)",
            mean(&probes),
            secs(run.elapsed)
        ),
    )
}

/// Not a criterion: the acceptance model on a stronger edge signal, as a
/// check that it learns once the planted pairs stand out from the rest.
fn stronger_signal() {
    for s in 0..3 {
        let spec = SynthSpec {
            strength: 0.3,
            seed: s,
            ..Default::default()
        };
        let ds = gen_dataset(&spec, &WindowConfig::default()).unwrap();
        let acc = cross_validate(&ds, &acceptance_cfg(&ds, s)).unwrap().mean_acc();
        let p = probe_accuracy(&ds, &ProbeConfig::default()).unwrap();
        println!("    strength 0.3, seed {s}: ACC {acc:.4}, probe {p:.3}");
    }
}

fn criterion_7() -> Outcome {
    let full = mean(&full_run().accs);
    let node_only = mean(&run_planted(ScoreMode::NodeOnly).accs);
    let gap = 100.0 * (full - node_only);
    outcome(
        gap >= 5.0,
        format!("edge-to-node {full:.4} vs node-only {node_only:.4}: gap {gap:+.2} points (need >= 5)"),
    )
}

fn criterion_8() -> Outcome {
    let spec = SynthSpec {
        strength: 0.0,
        seed: 0,
        ..Default::default()
    };
    let ds = gen_dataset(&spec, &WindowConfig::default()).unwrap();
    let cv = cross_validate(&ds, &acceptance_cfg(&ds, 0)).unwrap();
    let (k, n) = cv.correct_and_total();
    let (lo, hi) = wilson_interval(k, n).unwrap();
    outcome(
        lo <= 0.5 && 0.5 <= hi,
        format!("{k}/{n} correct, ACC {:.4}, 95% interval [{lo:.4}, {hi:.4}]", k as f64 / n as f64),
    )
}

fn criterion_9() -> Outcome {
    let (mut recalls, mut coverage) = (Vec::new(), Vec::new());
    for s in 0..SEEDS {
        let ds = planted(s);
        let planted_nodes = SynthSpec::default().planted;
        let (model, _) = fit_full(&ds, &acceptance_cfg(&ds, s)).unwrap();
        let mut found = 0usize;
        let mut total = 0usize;
        let (mut covered_nodes, mut graphs) = (0usize, 0usize);
        for (i, p) in prepare(&ds.graphs).iter().enumerate().filter(|(_, p)| p.graph.label == Some(1)) {
            let export = ClusterExport::new(i, &p.graph, &model.assign_clusters(p).unwrap());
            let covered: Vec<usize> = export.nodes().collect();
            covered_nodes += covered.len();
            graphs += p.graph.n;
            found += planted_nodes.iter().filter(|v| covered.contains(v)).count();
            total += planted_nodes.len();
        }
        let r = found as f64 / total as f64;
        // A node set of the same size drawn at random has expected recall
        // equal to the covered fraction.
        let c = covered_nodes as f64 / graphs as f64;
        println!("    seed {s}: recall {r:.4} over class-1 graphs, clusters cover {c:.4} of all nodes");
        recalls.push(r);
        coverage.push(c);
    }
    let r = mean(&recalls);
    outcome(
        r >= 0.8,
        format!(
            "mean recall of planted nodes {r:.4} over {SEEDS} seeds (need >= 0.8); covered fraction {:.4}",
            mean(&coverage)
        ),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        per_class: 20,
        seed: 3,
        ..Default::default()
    };
    let ds = gen_dataset(&spec, &WindowConfig::default()).unwrap();
    let (p1, p2) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    save_dataset(&ds, &p1).unwrap();
    let back = load_dataset(&p1).unwrap();
    save_dataset(&back, &p2).unwrap();
    let identical = back.graphs == ds.graphs
        && back.metadata == ds.metadata
        && std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap();

    let mut cfg = acceptance_cfg(&ds, 7);
    cfg.epochs = 30;
    cfg.repeats = 2;
    let (m1, m2) = (dir.path().join("m1.csv"), dir.path().join("m2.csv"));
    cross_validate(&back, &cfg).unwrap().write_metrics_csv(&m1).unwrap();
    cross_validate(&load_dataset(&p2).unwrap(), &cfg).unwrap().write_metrics_csv(&m2).unwrap();
    let same_metrics = std::fs::read(&m1).unwrap() == std::fs::read(&m2).unwrap();
    outcome(
        identical && same_metrics,
        format!("save/load identity: {identical}; metrics.csv byte-identical across runs: {same_metrics}"),
    )
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("hard partition", criterion_1),
        ("clustering oracle", criterion_2),
        ("scoring oracle", criterion_3),
        ("gradient checks", criterion_4),
        ("invariance", criterion_5),
        ("planted-signal learning", criterion_6),
        ("ablation ordering", criterion_7),
        ("null dataset", criterion_8),
        ("subgraph recovery", criterion_9),
        ("round trip and determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        println!(
            "criterion {id:>2} {name}: {} ({}) [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            secs(start.elapsed())
        );
        failed += usize::from(!o.pass);
        if id == 6 {
            stronger_signal();
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
