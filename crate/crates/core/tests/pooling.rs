mod common;

use common::*;
use ehcpool::autodiff::{ParamStore, Tensor};
use ehcpool::graph::NeighborIndex;
use ehcpool::pool::scores::{edge_score_values, gate_values, node_score_values};
use ehcpool::pool::{iterate_n_top, pool_graph, ClusterAssignment, ClusterSize, PoolConfig, PoolParams, ReadoutMode, ScoreMode};
use ehcpool::synth::gen_toy_graph;
use ehcpool::AttributedGraph;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle_of(a: &ClusterAssignment) -> Vec<OracleCluster> {
    a.clusters.iter().map(|c| (c.core, c.regulars.clone(), c.edges.clone())).collect()
}

fn skeleton(n: usize, edges: Vec<[usize; 2]>) -> (AttributedGraph, NeighborIndex) {
    let m = edges.len();
    let g = AttributedGraph::new(Tensor::zeros(n, 1), edges, Tensor::zeros(m, 1), None).unwrap();
    let idx = NeighborIndex::build(&g);
    (g, idx)
}

/// Scores drawn from a tiny integer set half of the time, so ties are common.
fn scores<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    if rng.gen_bool(0.5) {
        (0..len).map(|_| f64::from(rng.gen_range(-2..3))).collect()
    } else {
        (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect()
    }
}

#[test]
fn matches_brute_force_on_small_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.gen_range(1..=9);
        let p = rng.gen_range(0.0..1.0);
        let edges = random_edges(&mut rng, n, p);
        let (g, idx) = skeleton(n, edges);
        let (pv, pe) = (scores(&mut rng, n), scores(&mut rng, g.num_edges()));
        let (gamma, cap) = (rng.gen_range(1..=6), rng.gen_range(1..=5));
        let got = iterate_n_top(&pv, &pe, &idx, &PoolConfig::with_cap(gamma, cap)).unwrap();
        assert_eq!(oracle_of(&got), brute_force_greedy(n, &g.edges, &pv, &pe, gamma, cap));
    }
}

#[test]
fn toy_path4_clusters_and_scores() {
    let g = gen_toy_graph("path4").unwrap();
    let idx = NeighborIndex::build(&g);
    let phi_e = edge_score_values(&g.l, &[1.0]).unwrap();
    assert_eq!(phi_e, vec![0.3, 0.8, 0.4]);
    let phi_v = node_score_values(&g.x, &[1.0], 0.0, &phi_e, &g.edges, ScoreMode::EdgeToNode).unwrap();
    let want = [0.1, 0.9, 0.5, 0.2];
    assert!(phi_v.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12));
    let a = iterate_n_top(&phi_v, &phi_e, &idx, &PoolConfig::with_cap(2, 2)).unwrap();
    assert_eq!(oracle_of(&a), vec![(1, vec![2], vec![1]), (3, vec![], vec![])]);
}

#[test]
fn ratio_cap_is_ceiling() {
    assert_eq!(ClusterSize::Ratio(0.2).cap(16), 4);
    assert_eq!(ClusterSize::Ratio(0.1875).cap(16), 3);
    assert_eq!(ClusterSize::Ratio(0.01).cap(16), 1);
    assert_eq!(ClusterSize::Cap(3).cap(200), 3);
}

#[test]
fn scoring_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.gen_range(1..15);
        let (d, de) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let edges = random_edges(&mut rng, n, 0.4);
        let g = random_graph(&mut rng, n, edges, d, de);
        let p1: Vec<f64> = (0..de).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p2: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let delta = rng.gen_range(0.0..1.0);
        let pe = edge_score_values(&g.l, &p1).unwrap();
        let want = ref_edge_scores(&g.l, &p1);
        assert!(pe.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12));
        assert!(gate_values(&g.l, &pe).unwrap().max_abs_diff(&ref_gate(&g.l, &pe)) <= 1e-12);
        for mode in [ScoreMode::EdgeToNode, ScoreMode::NodeOnly, ScoreMode::EdgeOnly] {
            let pv = node_score_values(&g.x, &p2, delta, &pe, &g.edges, mode).unwrap();
            let want = ref_node_scores(&g.x, &p2, delta, &pe, &g.edges, mode);
            assert!(pv.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12));
        }
    }
}

fn pool_params(d: usize, de: usize, seed: u64) -> (ParamStore, PoolParams) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = PoolParams::new(&mut store, "pool", d, de, &mut rng);
    (store, p)
}

#[test]
fn readouts_against_hand_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (d, de, gamma) = (3, 2, 4);
    let edges = random_connected_edges(&mut rng, 7, 0.3);
    let g = random_graph(&mut rng, 7, edges, d, de);
    let idx = NeighborIndex::build(&g);
    let (store, params) = pool_params(d, de, 1);

    let mut cfg = PoolConfig::with_cap(gamma, 3);
    let (out, sc) = pool_graph(&store, &g, &idx, &g.x, &g.l, &params, &cfg).unwrap();
    let a = &out.assignment;
    assert_eq!(out.basis.shape(), (gamma, d));

    let wc = store.get(params.wc);
    let wcb = store.get(params.wc_bias);
    let bc = store.get(params.bc);
    for k in 0..gamma {
        let Some(c) = a.clusters.get(k) else {
            assert!(out.basis.row(k).iter().all(|&v| v == 0.0));
            continue;
        };
        let mut want: Vec<f64> = (0..d).map(|o| g.x.get(c.core, o) + bc.get(0, o)).collect();
        for (&j, &e) in c.regulars.iter().zip(&c.edges) {
            // W = reshape(gated(e) wc + wc_bias), row-major d x d.
            let w: Vec<f64> = (0..d * d)
                .map(|f| wcb.get(0, f) + (0..de).map(|t| sc.gated_edges.get(e, t) * wc.get(t, f)).sum::<f64>())
                .collect();
            for o in 0..d {
                want[o] += (0..d).map(|i| w[o * d + i] * g.x.get(j, i)).sum::<f64>();
            }
        }
        for o in 0..d {
            assert!((out.basis.get(k, o) - want[o]).abs() < 1e-12);
        }
    }

    cfg.readout = ReadoutMode::FeatureSelection;
    let (fs, _) = pool_graph(&store, &g, &idx, &g.x, &g.l, &params, &cfg).unwrap();
    for (k, c) in a.clusters.iter().enumerate() {
        assert_eq!(fs.basis.row(k), g.x.row(c.core));
    }

    cfg.readout = ReadoutMode::FullyConnected;
    let (fc, _) = pool_graph(&store, &g, &idx, &g.x, &g.l, &params, &cfg).unwrap();
    for (k, c) in a.clusters.iter().enumerate() {
        for o in 0..d {
            let mean = c.members().map(|v| g.x.get(v, o)).sum::<f64>() / c.len() as f64;
            assert!((fc.basis.get(k, o) - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn singleton_pools_to_one_cluster_and_zero_padding() {
    let g = gen_toy_graph("singleton").unwrap();
    let idx = NeighborIndex::build(&g);
    let (store, params) = pool_params(2, 1, 3);
    let (out, _) = pool_graph(&store, &g, &idx, &g.x, &g.l, &params, &PoolConfig::with_cap(5, 3)).unwrap();
    assert_eq!(out.assignment.len(), 1);
    let bc = store.get(params.bc);
    assert_eq!(out.basis.row(0), &[3.0 + bc.get(0, 0), 4.0 + bc.get(0, 1)]);
    for k in 1..5 {
        assert_eq!(out.basis.row(k), &[0.0, 0.0]);
    }
}

fn arb_case() -> impl Strategy<Value = (usize, u64, usize, usize)> {
    (1usize..40, any::<u64>(), 1usize..8, 1usize..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn clusters_form_a_hard_partition((n, seed, gamma, cap) in arb_case()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rng.gen_range(0.0..0.6);
        let edges = random_edges(&mut rng, n, p);
        let (g, idx) = skeleton(n, edges);
        let (pv, pe) = (scores(&mut rng, n), scores(&mut rng, g.num_edges()));
        let a = iterate_n_top(&pv, &pe, &idx, &PoolConfig::with_cap(gamma, cap)).unwrap();
        prop_assert!(a.len() <= gamma && a.len() >= 1);
        let mut seen = vec![false; n];
        for c in &a.clusters {
            prop_assert!(c.len() <= cap);
            for v in c.members() {
                prop_assert!(!seen[v], "node {} in two clusters", v);
                seen[v] = true;
            }
            for (&j, &e) in c.regulars.iter().zip(&c.edges) {
                let [s, t] = g.edges[e];
                prop_assert!((s == c.core && t == j) || (t == c.core && s == j));
            }
        }
    }

    #[test]
    fn positive_rescaling_keeps_assignment((n, seed, gamma, cap) in arb_case(), c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_edges(&mut rng, n, 0.4);
        let (g, idx) = skeleton(n, edges);
        let (pv, pe) = (scores(&mut rng, n), scores(&mut rng, g.num_edges()));
        let cfg = PoolConfig::with_cap(gamma, cap);
        let a = iterate_n_top(&pv, &pe, &idx, &cfg).unwrap();
        let sv: Vec<f64> = pv.iter().map(|v| v * c).collect();
        let se: Vec<f64> = pe.iter().map(|v| v * c).collect();
        prop_assert_eq!(a, iterate_n_top(&sv, &se, &idx, &cfg).unwrap());
    }

    #[test]
    fn p1_scale_leaves_edge_scores(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = random_tensor(&mut rng, 20, 4);
        let p1: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = p1.iter().map(|v| v * c).collect();
        let a = edge_score_values(&l, &p1).unwrap();
        let b = edge_score_values(&l, &scaled).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12));
    }

    #[test]
    fn relabeling_permutes_clusters((n, seed, gamma, cap) in arb_case()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_edges(&mut rng, n, 0.4);
        let (g, idx) = skeleton(n, edges);
        // Distinct scores: with ties the lowest-index rule is not label-free.
        let pv: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pe: Vec<f64> = (0..g.num_edges()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        shuffle(&mut rng, &mut perm);
        let h = g.relabel(&perm);
        let hidx = NeighborIndex::build(&h);
        let mut hv = vec![0.0; n];
        for v in 0..n {
            hv[perm[v]] = pv[v];
        }
        let cfg = PoolConfig::with_cap(gamma, cap);
        let a = iterate_n_top(&pv, &pe, &idx, &cfg).unwrap();
        let b = iterate_n_top(&hv, &pe, &hidx, &cfg).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.clusters.iter().zip(&b.clusters) {
            prop_assert_eq!(perm[x.core], y.core);
            let xs: Vec<usize> = x.regulars.iter().map(|&v| perm[v]).collect();
            prop_assert_eq!(&xs, &y.regulars);
            prop_assert_eq!(&x.edges, &y.edges);
        }
    }
}
