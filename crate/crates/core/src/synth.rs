//! Synthetic dynamic-connectivity datasets with a planted discriminative
//! subnetwork, plus the small fixture graphs used by the tests.
//!
//! Each node's series is `a_i g(t) + noise * e_i(t)` with a shared factor `g`
//! and fixed per-node loadings `a_i`. Class 1 graphs carry one of two signals
//! on the planted set `S`:
//!
//! * edge signal: `x_i <- sqrt(1 - s) x_i + sqrt(s) sd_i f(t)` for a second
//!   shared factor `f`, which raises within-`S` correlation while leaving each
//!   node's variance unchanged;
//! * node signal: `x_i <- (1 + s) x_i`, which scales variance only.
//!
//! Windowed features: node channel `t` is the population standard deviation
//! of the node's samples `[t*step, t*step + width)`, edge channel `t` is the
//! Pearson correlation of the two endpoints over the same window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, GraphDataset};
use crate::init::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub width: usize,
    pub step: usize,
    pub series_len: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            width: 95,
            step: 10,
            series_len: 295,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.width > self.series_len {
            return Err(Error::Window(format!(
                "window width must satisfy 2 <= W <= T (W = {}, T = {})",
                self.width, self.series_len
            )));
        }
        if self.step == 0 {
            return Err(Error::Window("window step must be >= 1".into()));
        }
        Ok(())
    }

    /// `floor((T - W) / s) + 1`.
    pub fn num_windows(&self) -> usize {
        (self.series_len - self.width) / self.step + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalType {
    EdgeSignal,
    NodeSignal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub nodes: usize,
    /// Planted subnetwork `S`.
    pub planted: Vec<usize>,
    pub signal: SignalType,
    /// The default puts the linear probe in [`probe`] at about 85% on the
    /// default 16-node, 100-per-class dataset.
    pub strength: f64,
    pub per_class: usize,
    /// Standard deviation of the idiosyncratic noise.
    pub noise: f64,
    /// Range of the per-node loadings on the shared factor.
    pub loading_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            nodes: 16,
            planted: vec![5, 9, 12],
            signal: SignalType::EdgeSignal,
            strength: 0.125,
            per_class: 100,
            noise: 1.0,
            loading_range: (0.3, 0.7),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::Config("synthetic graphs need at least one node".into()));
        }
        if let Some(&v) = self.planted.iter().find(|&&v| v >= self.nodes) {
            return Err(Error::Config(format!("planted node {v} outside [0, {})", self.nodes)));
        }
        let mut s = self.planted.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.planted.len() {
            return Err(Error::Config("planted nodes must be distinct".into()));
        }
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::Config(format!("strength must be >= 0, got {}", self.strength)));
        }
        if self.signal == SignalType::EdgeSignal && self.strength > 1.0 {
            return Err(Error::Config(format!("edge-signal strength must be <= 1, got {}", self.strength)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        let (lo, hi) = self.loading_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("invalid loading range ({lo}, {hi})")));
        }
        Ok(())
    }

    /// Per-node loadings; fixed by the spec seed, shared by every graph.
    pub fn loadings(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, u64::MAX));
        let (lo, hi) = self.loading_range;
        (0..self.nodes)
            .map(|_| if lo == hi { lo } else { rng.gen_range(lo..hi) })
            .collect()
    }
}

/// One subject's `n x T` series. Deterministic in `(spec, class_label, seed)`.
pub fn gen_time_series(spec: &SynthSpec, class_label: u8, series_len: usize, seed: u64) -> Result<Tensor> {
    spec.validate()?;
    let loadings = spec.loadings();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let shared: Vec<f64> = (0..series_len).map(|_| normal()).collect();
    let sub: Vec<f64> = (0..series_len).map(|_| normal()).collect();
    let mut out = Tensor::zeros(spec.nodes, series_len);
    for (i, &a) in loadings.iter().enumerate() {
        let row = out.row_mut(i);
        for (t, v) in row.iter_mut().enumerate() {
            *v = a * shared[t] + spec.noise * normal();
        }
    }
    if class_label == 1 && spec.strength > 0.0 {
        for &i in &spec.planted {
            let row = out.row_mut(i);
            match spec.signal {
                SignalType::EdgeSignal => {
                    let sd = (loadings[i] * loadings[i] + spec.noise * spec.noise).sqrt();
                    let (keep, mix) = ((1.0 - spec.strength).sqrt(), spec.strength.sqrt() * sd);
                    for (v, f) in row.iter_mut().zip(&sub) {
                        *v = keep * *v + mix * f;
                    }
                }
                SignalType::NodeSignal => row.iter_mut().for_each(|v| *v *= 1.0 + spec.strength),
            }
        }
    }
    Ok(out)
}

/// Complete graph on `n` nodes: `(i, j)` with `i < j`, lexicographic.
pub fn complete_edges(n: usize) -> Vec<[usize; 2]> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| [i, j])).collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pearson correlation, or `None` if either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug)]
pub struct WindowFeatures {
    /// `n x K_w` standard deviations.
    pub x: Tensor,
    /// `M x K_w` correlations, one row per edge of [`complete_edges`].
    pub l: Tensor,
    pub edges: Vec<[usize; 2]>,
    /// Number of (edge, window) entries set to 0 because a series was constant.
    pub degenerate: usize,
}

pub fn sliding_window_features(series: &Tensor, w: &WindowConfig) -> Result<WindowFeatures> {
    let (n, t) = series.shape();
    if t != w.series_len {
        return Err(Error::Window(format!(
            "series has {t} samples but the window config expects T = {}",
            w.series_len
        )));
    }
    w.validate()?;
    let k = w.num_windows();
    let edges = complete_edges(n);
    let mut x = Tensor::zeros(n, k);
    let mut l = Tensor::zeros(edges.len(), k);
    let mut degenerate = 0;
    for c in 0..k {
        let span = c * w.step..c * w.step + w.width;
        for i in 0..n {
            x.set(i, c, mean_std(&series.row(i)[span.clone()]).1);
        }
        for (e, &[i, j]) in edges.iter().enumerate() {
            match pearson(&series.row(i)[span.clone()], &series.row(j)[span.clone()]) {
                Some(r) => l.set(e, c, r),
                None => degenerate += 1,
            }
        }
    }
    Ok(WindowFeatures { x, l, edges, degenerate })
}

/// `per_class` graphs of class 0 followed by `per_class` of class 1. Graph
/// `g` uses the series seed `derive_seed(spec.seed, g)`.
pub fn gen_dataset(spec: &SynthSpec, w: &WindowConfig) -> Result<GraphDataset> {
    spec.validate()?;
    w.validate()?;
    let mut graphs = Vec::with_capacity(2 * spec.per_class);
    let mut degenerate = 0;
    for idx in 0..2 * spec.per_class {
        let label = u8::from(idx >= spec.per_class);
        let series = gen_time_series(spec, label, w.series_len, derive_seed(spec.seed, idx as u64))?;
        let f = sliding_window_features(&series, w)?;
        degenerate += f.degenerate;
        graphs.push(AttributedGraph::new(f.x, f.edges, f.l, Some(label))?);
    }
    let meta = serde_json::json!({
        "generator": "synthetic",
        "features": "surrogate: windowed standard deviation (nodes), windowed Pearson correlation (edges)",
        "spec": spec,
        "window": w,
        "null_dataset": spec.strength == 0.0,
        "degenerate_windows": degenerate,
    });
    Ok(GraphDataset::new(graphs)?.with_metadata(meta))
}

/// Named fixture graphs.
///
/// * `path4`: path `0-1-2-3`, `d = d_e = 1`. With unit `p1`, `p2` and
///   `delta = 0` it scores nodes `[0.1, 0.9, 0.5, 0.2]` and edges
///   `[0.3, 0.8, 0.4]`.
/// * `triangle`: `n = 3`, `d = 2`, `d_e = 1`, all features zero.
/// * `star4`: center 0 with leaves 1, 2, 3; `d = 2`, `d_e = 1`.
/// * `singleton`: one node with `X = [3, 4]`, no edges.
pub fn gen_toy_graph(name: &str) -> Result<AttributedGraph> {
    let t = |rows: &[&[f64]], cols: usize| {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), cols)
    };
    match name {
        "path4" => AttributedGraph::new(
            t(&[&[-0.2], &[-0.2], &[-0.7], &[-0.2]], 1)?,
            vec![[0, 1], [1, 2], [2, 3]],
            t(&[&[0.3], &[0.8], &[0.4]], 1)?,
            None,
        ),
        "triangle" => AttributedGraph::new(Tensor::zeros(3, 2), vec![[0, 1], [0, 2], [1, 2]], Tensor::zeros(3, 1), None),
        "star4" => AttributedGraph::new(
            t(&[&[1.0, 0.0], &[2.0, 0.0], &[0.0, 4.0], &[1.0, 1.0]], 2)?,
            vec![[0, 1], [0, 2], [0, 3]],
            t(&[&[0.5], &[1.0], &[-0.5]], 1)?,
            None,
        ),
        "singleton" => AttributedGraph::new(t(&[&[3.0, 4.0]], 2)?, vec![], Tensor::zeros(0, 1), None),
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}

pub mod probe {
    //! L2-regularised logistic regression on the flattened edge features,
    //! scored by stratified k-fold cross-validation. Used to calibrate how
    //! hard a synthetic dataset is.

    use super::*;
    use crate::train::stratified_folds;

    #[derive(Clone, Copy, Debug)]
    pub struct ProbeConfig {
        pub l2: f64,
        pub iterations: usize,
        pub tol: f64,
        pub folds: usize,
        pub seed: u64,
    }

    impl Default for ProbeConfig {
        fn default() -> Self {
            ProbeConfig {
                l2: 1e-2,
                iterations: 20_000,
                tol: 1e-8,
                folds: 5,
                seed: 0,
            }
        }
    }

    fn features(g: &AttributedGraph) -> Vec<f64> {
        g.l.data().to_vec()
    }

    /// Minimises mean logistic loss + `l2/2 |w|^2` (bias unpenalised) on
    /// standardised features. The optimum has `w = Z^T α` for the
    /// standardised training matrix `Z`, so gradient descent runs on `α`
    /// through the Gram matrix `K = Z Z^T`, stopping once the gradient norm
    /// falls below `tol` or after `iterations` steps.
    pub fn fit_predict(train: &[(Vec<f64>, u8)], test: &[Vec<f64>], cfg: &ProbeConfig) -> Vec<u8> {
        let p = train.first().map_or(0, |r| r.0.len());
        let n = train.len();
        let nf = n as f64;
        let mut mu = vec![0.0; p];
        let mut sd = vec![0.0; p];
        for (x, _) in train {
            mu.iter_mut().zip(x).for_each(|(m, v)| *m += v / nf);
        }
        for (x, _) in train {
            sd.iter_mut().zip(x).zip(&mu).for_each(|((s, v), m)| *s += (v - m) * (v - m) / nf);
        }
        sd.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        let z = |x: &[f64]| -> Vec<f64> { x.iter().zip(&mu).zip(&sd).map(|((v, m), s)| (v - m) / s).collect() };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let zs: Vec<Vec<f64>> = train.iter().map(|(x, _)| z(x)).collect();
        let ys: Vec<f64> = train.iter().map(|(_, y)| f64::from(*y)).collect();
        let gram: Vec<Vec<f64>> = zs.iter().map(|a| zs.iter().map(|b| dot(a, b)).collect()).collect();

        // Largest eigenvalue of K by power iteration, for the step size.
        let mut v = vec![1.0 / nf.sqrt(); n];
        let mut lam = 0.0;
        for _ in 0..100 {
            let kv: Vec<f64> = gram.iter().map(|row| dot(row, &v)).collect();
            lam = dot(&kv, &kv).sqrt();
            if lam == 0.0 {
                break;
            }
            v = kv.iter().map(|x| x / lam).collect();
        }
        let step = 1.0 / (0.25 * (lam + 1.0) / nf + cfg.l2);

        let mut alpha = vec![0.0; n];
        let mut b = 0.0;
        for _ in 0..cfg.iterations {
            let r: Vec<f64> = gram
                .iter()
                .zip(&ys)
                .map(|(row, y)| (crate::autodiff::sigmoid(dot(row, &alpha) + b) - y) / nf)
                .collect();
            // Gradient in w-space is Z^T g with g = r + l2 α; its norm is sqrt(g^T K g).
            let g: Vec<f64> = r.iter().zip(&alpha).map(|(ri, ai)| ri + cfg.l2 * ai).collect();
            let gb: f64 = r.iter().sum();
            let kg: Vec<f64> = gram.iter().map(|row| dot(row, &g)).collect();
            if (dot(&g, &kg) + gb * gb).sqrt() < cfg.tol {
                break;
            }
            alpha.iter_mut().zip(&g).for_each(|(a, gi)| *a -= step * gi);
            b -= step * gb;
        }
        let w: Vec<f64> = (0..p).map(|c| zs.iter().zip(&alpha).map(|(zi, a)| zi[c] * a).sum()).collect();
        test.iter().map(|x| u8::from(dot(&z(x), &w) + b > 0.0)).collect()
    }

    /// Mean cross-validated accuracy.
    pub fn probe_accuracy(ds: &GraphDataset, cfg: &ProbeConfig) -> Result<f64> {
        let labels: Vec<u8> = ds
            .labels()
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Config("probe needs a labeled dataset".into()))?;
        let folds = stratified_folds(&labels, cfg.folds, cfg.seed)?;
        let mut correct = 0usize;
        for test_idx in &folds {
            let train: Vec<(Vec<f64>, u8)> = (0..ds.len())
                .filter(|i| !test_idx.contains(i))
                .map(|i| (features(&ds.graphs[i]), labels[i]))
                .collect();
            let test: Vec<Vec<f64>> = test_idx.iter().map(|&i| features(&ds.graphs[i])).collect();
            let pred = fit_predict(&train, &test, cfg);
            correct += test_idx.iter().zip(pred).filter(|(&i, p)| labels[i] == *p).count();
        }
        Ok(correct as f64 / ds.len() as f64)
    }
}
