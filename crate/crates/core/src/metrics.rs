//! Binary classification metrics from confusion counts. Any ratio with a zero
//! denominator is reported as 0 and flagged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    /// No positive examples.
    pub sen: bool,
    /// No negative examples.
    pub spe: bool,
    /// Precision or `P + R` undefined.
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.sen || self.spe || self.f1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub degenerate: Degenerate,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<Metrics> {
        let acc = ratio(tp + tn, tp + tn + fp + fn_).ok_or(Error::EmptySet)?;
        let sen = ratio(tp, tp + fn_);
        let spe = ratio(tn, tn + fp);
        let f1 = ratio(tp, tp + fp).zip(sen).and_then(|(p, r)| (p + r > 0.0).then(|| 2.0 * p * r / (p + r)));
        Ok(Metrics {
            acc,
            sen: sen.unwrap_or(0.0),
            spe: spe.unwrap_or(0.0),
            f1: f1.unwrap_or(0.0),
            tp,
            fp,
            tn,
            fn_,
            degenerate: Degenerate {
                sen: sen.is_none(),
                spe: spe.is_none(),
                f1: f1.is_none(),
            },
        })
    }

    /// Prediction is `logit > 0`.
    pub fn from_logits(logits: &[f64], labels: &[u8]) -> Result<Metrics> {
        if logits.len() != labels.len() {
            return Err(Error::shape("logits vs labels", labels.len(), logits.len()));
        }
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&z, &y) in logits.iter().zip(labels) {
            match (z > 0.0, y == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        Metrics::from_counts(tp, fp, tn, fn_)
    }

    pub fn values(&self) -> [f64; 4] {
        [self.acc, self.sen, self.spe, self.f1]
    }
}

pub const METRIC_NAMES: [&str; 4] = ["ACC", "SEN", "SPE", "F1"];

/// Mean and population standard deviation of each metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl MetricStats {
    pub fn of(entries: &[Metrics]) -> Result<MetricStats> {
        if entries.is_empty() {
            return Err(Error::EmptySet);
        }
        let n = entries.len() as f64;
        let mut mean = [0.0; 4];
        let mut std = [0.0; 4];
        for m in entries {
            mean.iter_mut().zip(m.values()).for_each(|(a, v)| *a += v / n);
        }
        for m in entries {
            std.iter_mut()
                .zip(m.values())
                .zip(mean)
                .for_each(|((s, v), mu)| *s += (v - mu) * (v - mu) / n);
        }
        std.iter_mut().for_each(|s| *s = s.sqrt());
        Ok(MetricStats { mean, std })
    }

    pub fn mean_acc(&self) -> f64 {
        self.mean[0]
    }

    pub fn std_acc(&self) -> f64 {
        self.std[0]
    }
}

/// Wilson score interval for a binomial proportion at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> Option<(f64, f64)> {
    if trials == 0 {
        return None;
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + Z * Z / n;
    let center = (p + Z * Z / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + Z * Z / (4.0 * n * n)).sqrt() / denom;
    Some(((center - half).max(0.0), (center + half).min(1.0)))
}
