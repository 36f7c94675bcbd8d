//! Training loop, evaluation, stratified cross-validation and the γ/cap
//! sensitivity sweep.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::autodiff::{AdamState, Tape};
use crate::error::{Error, Result};
use crate::graph::GraphDataset;
use crate::init::derive_seed;
use crate::metrics::{MetricStats, Metrics};
use crate::model::{prepare, Model, ModelConfig, Phase, PreparedGraph};
use crate::pool::ClusterSize;

/// Training aborts when the epoch loss exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const FOLD_STREAM: u64 = 0x464f_4c44;
const INIT_STREAM: u64 = 0x494e_4954;
const FULL_STREAM: u64 = 0x4655_4c4c;

fn labels_of(graphs: &[PreparedGraph]) -> Result<Vec<u8>> {
    graphs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.graph
                .label
                .ok_or_else(|| Error::Config(format!("graph {i} has no label; training needs labels")))
        })
        .collect()
}

/// Runs `model.cfg.epochs` epochs of Adam on minibatches of the shuffled
/// training set and returns the per-epoch mean loss. The shuffling stream is
/// derived from `model.cfg.seed`.
pub fn train(model: &mut Model, train_set: &[PreparedGraph]) -> Result<Vec<f64>> {
    if train_set.is_empty() {
        return Err(Error::EmptySet);
    }
    let labels = labels_of(train_set)?;
    let cfg = model.cfg.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_STREAM));
    let mut adam = AdamState::new(&model.store, cfg.lr);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedGraph> = chunk.iter().map(|&i| &train_set[i]).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| f64::from(labels[i])).collect();
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &batch, Phase::Train)?;
            let loss = tape.bce_with_logits(out.logits, &targets)?;
            let value = tape.value(loss).item();
            if !value.is_finite() || value > DIVERGENCE_LIMIT {
                return Err(Error::NonFiniteLoss { epoch, loss: value });
            }
            total += value * chunk.len() as f64;
            let grads = tape.backward(loss)?.param_grads(&tape, &model.store);
            adam.step(&mut model.store, &grads)?;
            model.update_running_stats(&out.bn_stats);
        }
        let mean = total / train_set.len() as f64;
        log::trace!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok(history)
}

/// Eval-phase metrics on a labeled set, evaluated in chunks of the training
/// batch size.
pub fn evaluate(model: &Model, test_set: &[PreparedGraph]) -> Result<Metrics> {
    if test_set.is_empty() {
        return Err(Error::EmptySet);
    }
    let labels = labels_of(test_set)?;
    let mut logits = Vec::with_capacity(test_set.len());
    for chunk in test_set.chunks(64) {
        let batch: Vec<&PreparedGraph> = chunk.iter().collect();
        logits.extend(model.predict_logits(&batch)?);
    }
    Metrics::from_logits(&logits, &labels)
}

/// Splits indices into `k` test folds preserving class ratios. Within each
/// class the shuffled indices are dealt round-robin, continuing the deal
/// across classes so fold sizes differ by at most one. Each fold is sorted.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("folds must be >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            got: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub metrics: Metrics,
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CvSummary {
    /// Ordered by `(repeat, fold)`.
    pub entries: Vec<FoldResult>,
    pub stats: MetricStats,
}

impl CvSummary {
    pub fn mean_acc(&self) -> f64 {
        self.stats.mean_acc()
    }

    pub fn std_acc(&self) -> f64 {
        self.stats.std_acc()
    }

    /// Correct test predictions over all folds of all repeats.
    pub fn correct_and_total(&self) -> (usize, usize) {
        self.entries.iter().fold((0, 0), |(c, t), e| {
            let m = &e.metrics;
            (c + m.tp + m.tn, t + m.tp + m.tn + m.fp + m.fn_)
        })
    }

    pub fn write_metrics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("repeat,fold,ACC,SEN,SPE,F1\n");
        for e in &self.entries {
            let [a, s, p, f] = e.metrics.values();
            out.push_str(&format!("{},{},{a},{s},{p},{f}\n", e.repeat, e.fold));
        }
        write_file(path.as_ref(), &out)
    }

    pub fn write_loss_history_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("repeat,fold,epoch,loss\n");
        for e in &self.entries {
            for (epoch, l) in e.loss_history.iter().enumerate() {
                out.push_str(&format!("{},{},{epoch},{l}\n", e.repeat, e.fold));
            }
        }
        write_file(path.as_ref(), &out)
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Model seed of one `(repeat, fold)` cell.
pub fn fold_seed(cfg: &ModelConfig, repeat: usize, fold: usize) -> u64 {
    derive_seed(derive_seed(cfg.seed, INIT_STREAM), (repeat * cfg.folds + fold) as u64)
}

/// `cfg.repeats` rounds of stratified `cfg.folds`-fold cross-validation.
/// Every `(repeat, fold)` trains a fresh model; cells run on the rayon pool
/// and are collected in order, so the result does not depend on scheduling.
pub fn cross_validate(ds: &GraphDataset, cfg: &ModelConfig) -> Result<CvSummary> {
    cfg.validate()?;
    let prepared = prepare(&ds.graphs);
    let labels = labels_of(&prepared)?;
    let mut tasks = Vec::new();
    for repeat in 0..cfg.repeats {
        let split_seed = derive_seed(derive_seed(cfg.seed, FOLD_STREAM), repeat as u64);
        for (fold, test_idx) in stratified_folds(&labels, cfg.folds, split_seed)?.into_iter().enumerate() {
            tasks.push((repeat, fold, test_idx));
        }
    }
    let entries = tasks
        .into_par_iter()
        .map(|(repeat, fold, test_idx)| {
            let mut is_test = vec![false; prepared.len()];
            test_idx.iter().for_each(|&i| is_test[i] = true);
            let train_set: Vec<PreparedGraph> =
                prepared.iter().zip(&is_test).filter(|(_, t)| !**t).map(|(p, _)| p.clone()).collect();
            let test_set: Vec<PreparedGraph> = test_idx.iter().map(|&i| prepared[i].clone()).collect();
            let mut fold_cfg = cfg.clone();
            fold_cfg.seed = fold_seed(cfg, repeat, fold);
            let mut model = Model::build(&fold_cfg)?;
            let loss_history = train(&mut model, &train_set)?;
            let metrics = evaluate(&model, &test_set)?;
            log::debug!("repeat {repeat} fold {fold}: ACC {:.4}", metrics.acc);
            Ok(FoldResult {
                repeat,
                fold,
                metrics,
                loss_history,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<Metrics> = entries.iter().map(|e| e.metrics).collect();
    Ok(CvSummary {
        stats: MetricStats::of(&metrics)?,
        entries,
    })
}

/// Trains one model on the whole dataset, e.g. for cluster export. Its seed
/// is derived from `cfg.seed` on a stream no cross-validation cell uses.
pub fn fit_full(ds: &GraphDataset, cfg: &ModelConfig) -> Result<(Model, Vec<f64>)> {
    cfg.validate()?;
    let prepared = prepare(&ds.graphs);
    let mut c = cfg.clone();
    c.seed = derive_seed(cfg.seed, FULL_STREAM);
    let mut model = Model::build(&c)?;
    let history = train(&mut model, &prepared)?;
    Ok((model, history))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepCell {
    pub gamma: usize,
    pub beta_cap: usize,
    pub summary: CvSummary,
}

/// One cross-validation per `(γ, cap)` pair. Lists are sorted and
/// deduplicated; cells come out ordered by γ, then cap.
pub fn sensitivity_sweep(
    ds: &GraphDataset,
    gammas: &[usize],
    beta_caps: &[usize],
    cfg: &ModelConfig,
) -> Result<Vec<SweepCell>> {
    if gammas.is_empty() || beta_caps.is_empty() {
        return Err(Error::Config("sweep needs at least one gamma and one beta cap".into()));
    }
    let sorted = |v: &[usize]| {
        let mut v = v.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut cells = Vec::new();
    for gamma in sorted(gammas) {
        for beta_cap in sorted(beta_caps) {
            let mut c = cfg.clone();
            c.pool.gamma = gamma;
            c.pool.cluster_size = ClusterSize::Cap(beta_cap);
            let summary = cross_validate(ds, &c)?;
            log::info!("gamma {gamma}, cap {beta_cap}: ACC {:.4}", summary.mean_acc());
            cells.push(SweepCell {
                gamma,
                beta_cap,
                summary,
            });
        }
    }
    Ok(cells)
}

pub fn write_sweep_csv(cells: &[SweepCell], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("gamma,beta_cap,mean_acc,std_acc\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.gamma,
            c.beta_cap,
            c.summary.mean_acc(),
            c.summary.std_acc()
        ));
    }
    write_file(path.as_ref(), &out)
}
