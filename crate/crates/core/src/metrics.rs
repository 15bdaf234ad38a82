//! Selection-quality and estimation-error metrics plus replicate
//! aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts and derived rates for one selected edge set against a
/// ground-truth edge set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelectionScore {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub fpr: f64,
    pub fnr: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Scores a binary selection against binary truth.
///
/// Degenerate denominators: `fpr = 0` when there are no true negatives or
/// false positives, `fnr = 0` when truth is empty, and `f1 = 1` only when
/// both truth and selection are empty.
pub fn score_selection(selected: &[bool], truth: &[bool]) -> Result<SelectionScore> {
    if selected.len() != truth.len() {
        return Err(Error::validation(format!(
            "selection length {} != truth length {}",
            selected.len(),
            truth.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for (&s, &t) in selected.iter().zip(truth) {
        match (s, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = (tp + fp + tn + fn_) as f64;
    let fpr = if fp + tn == 0 { 0.0 } else { fp as f64 / (fp + tn) as f64 };
    let fnr = if fn_ + tp == 0 { 0.0 } else { fn_ as f64 / (fn_ + tp) as f64 };
    let accuracy = if total == 0.0 { 1.0 } else { (tp + tn) as f64 / total };
    let f1 = if tp == 0 {
        if fp == 0 && fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
    };
    Ok(SelectionScore {
        tp,
        fp,
        tn,
        fn_,
        fpr,
        fnr,
        accuracy,
        f1,
    })
}

/// Mean squared elementwise error between two coefficient vectors.
pub fn mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::validation(format!(
            "estimate length {} != truth length {}",
            estimate.len(),
            truth.len()
        )));
    }
    let n = estimate.len() as f64;
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).powi(2))
        .sum::<f64>()
        / n)
}

/// Fieldwise mean and sample standard deviation over replicate scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub n: usize,
    pub fpr_mean: f64,
    pub fpr_std: f64,
    pub fnr_mean: f64,
    pub fnr_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

pub fn aggregate(scores: &[SelectionScore]) -> Result<ScoreSummary> {
    if scores.is_empty() {
        return Err(Error::validation("cannot aggregate an empty score list"));
    }
    let stat = |f: fn(&SelectionScore) -> f64| -> (f64, f64) {
        let vals: Vec<f64> = scores.iter().map(f).collect();
        mean_std(&vals)
    };
    let (fpr_mean, fpr_std) = stat(|s| s.fpr);
    let (fnr_mean, fnr_std) = stat(|s| s.fnr);
    let (accuracy_mean, accuracy_std) = stat(|s| s.accuracy);
    let (f1_mean, f1_std) = stat(|s| s.f1);
    Ok(ScoreSummary {
        n: scores.len(),
        fpr_mean,
        fpr_std,
        fnr_mean,
        fnr_std,
        accuracy_mean,
        accuracy_std,
        f1_mean,
        f1_std,
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
