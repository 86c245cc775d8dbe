//! Binary classification metrics with the conventions the evaluation
//! harness pins: precision and F1 are 0 when nothing is predicted positive,
//! and AUC uses midranks so ties contribute one half.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// None when `y_true` has a single class.
    pub auc: Option<f64>,
}

pub fn metrics(y_true: &[u8], y_pred: &[u8], scores: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() || y_true.len() != scores.len() {
        return Err(Error::Dimension(format!(
            "metrics: {} labels, {} predictions, {} scores",
            y_true.len(),
            y_pred.len(),
            scores.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Data("metrics on empty input".into()));
    }
    let (mut tp, mut fp, mut tn, mut fal_n) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t != 0, p != 0) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fal_n += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / y_true.len() as f64;
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fal_n == 0 { 0.0 } else { tp as f64 / (tp + fal_n) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics { accuracy, f1, precision, recall, auc: auc(y_true, scores) })
}

/// Rank-statistic AUC with midranks: equals the probability that a random
/// positive outscores a random negative, ties counting one half.
pub fn auc(y_true: &[u8], scores: &[f64]) -> Option<f64> {
    let n_pos = y_true.iter().filter(|&&v| v != 0).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // midranks over tie runs
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            rank[idx] = mid;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 =
        (0..y_true.len()).filter(|&i| y_true[i] != 0).map(|i| rank[i]).sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}
