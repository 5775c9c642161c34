//! Train/test split protocols and per-class precision, recall and F1.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{EpochSet, Label};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn check_fraction(f: f64, what: &str) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must lie in (0, 1), got {f}")))
    }
}

fn degenerate(n: usize, train: usize) -> Error {
    Error::DegenerateSplit(format!("{n} epochs give {train} train and {} test", n - train))
}

/// Uniform shuffle by seed; the first `round(fraction·N)` shuffled indices
/// form the test set. Both sides are returned in ascending order.
pub fn split_random(set: &EpochSet, test_fraction: f64, seed: u64) -> Result<Split> {
    split_random_n(set.len(), test_fraction, seed)
}

pub fn split_random_n(n: usize, test_fraction: f64, seed: u64) -> Result<Split> {
    check_fraction(test_fraction, "test fraction")?;
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(degenerate(n, n - n_test.min(n)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, test })
}

/// The first `round(fraction·N)` epochs in time train, the rest test.
///
/// With `drop_boundary`, leading test epochs whose window overlaps the last
/// training window are discarded so no samples are shared across the split.
pub fn split_ordered(set: &EpochSet, train_fraction: f64, drop_boundary: bool) -> Result<Split> {
    check_fraction(train_fraction, "train fraction")?;
    if !set.is_time_ordered() {
        return Err(Error::invalid("ordered split needs epochs sorted by origin time"));
    }
    let n = set.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(degenerate(n, n_train.min(n)));
    }
    let mut first_test = n_train;
    if drop_boundary {
        let train_end = set.epochs[n_train - 1].origin_time_s + set.window_s;
        while first_test < n && set.epochs[first_test].origin_time_s < train_end - 1e-9 {
            first_test += 1;
        }
        if first_test == n {
            return Err(degenerate(n, n_train));
        }
    }
    Ok(Split {
        train: (0..n_train).collect(),
        test: (first_test..n).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Set when any of precision, recall or F1 had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub samples: usize,
    pub classes: Vec<ClassMetrics>,
}

impl MetricsReport {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        self.classes
            .iter()
            .find(|c| c.label == label)
            .expect("every label has a row")
    }

    /// Plain-text table rounded to three decimals, one row per class.
    pub fn table(&self) -> String {
        let mut out = String::from("class  precision  recall  f1-score  support     tp     fp     fn     tn\n");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<5}  {:>9.3}  {:>6.3}  {:>8.3}  {:>7}  {:>5}  {:>5}  {:>5}  {:>5}{}",
                c.label.name(),
                c.precision,
                c.recall,
                c.f1,
                c.support,
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                if c.zero_division { "  (zero division)" } else { "" }
            );
        }
        let _ = writeln!(out, "accuracy {:.3} over {} samples", self.accuracy, self.samples);
        out
    }
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class metrics from confusion counts.
pub fn class_metrics(label: Label, tp: usize, fp: usize, fn_: usize, tn: usize) -> ClassMetrics {
    let mut zero_division = false;
    let precision = ratio(tp, tp + fp, &mut zero_division);
    let recall = ratio(tp, tp + fn_, &mut zero_division);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        zero_division = true;
        0.0
    };
    ClassMetrics {
        label,
        precision,
        recall,
        f1,
        support: tp + fn_,
        tp,
        fp,
        fn_,
        tn,
        zero_division,
    }
}

pub fn compute_metrics(predicted: &[Label], actual: &[Label]) -> Result<MetricsReport> {
    if predicted.len() != actual.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} predictions", actual.len()),
            got: format!("{} predictions", predicted.len()),
        });
    }
    if actual.is_empty() {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    let classes = Label::ALL
        .iter()
        .map(|&label| {
            let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
            for (&p, &a) in predicted.iter().zip(actual) {
                match (p == label, a == label) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
            class_metrics(label, tp, fp, fn_, tn)
        })
        .collect();
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(MetricsReport {
        accuracy: hits as f64 / actual.len() as f64,
        samples: actual.len(),
        classes,
    })
}
