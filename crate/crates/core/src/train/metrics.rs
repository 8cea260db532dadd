//! Ranking metrics.

use std::cmp::Ordering;

/// Evaluation summary for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub split: String,
    pub average_precision: f64,
    pub auc: f64,
    pub recall_k: usize,
    pub recall_at_k: f64,
    pub mrr: f64,
    pub loss: f64,
}

/// Indices sorted by descending score; equal scores keep input order.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    idx
}

/// Mean over positives of the precision at each positive's rank. `0` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(scores.len(), labels.len(), "scores/labels length mismatch");
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in descending_order(scores).iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// AUC as an exact fraction `(2U, 2·P·N)`, where `U` counts correctly ordered
/// (positive, negative) pairs with ties as ½.
pub fn auc_fraction(scores: &[f64], labels: &[bool]) -> (u64, u64) {
    assert_eq!(scores.len(), labels.len(), "scores/labels length mismatch");
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let (mut twice_u, mut neg_below) = (0u64, 0u64);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let group = &idx[i..j];
        let pos = group.iter().filter(|&&g| labels[g]).count() as u64;
        let neg = group.len() as u64 - pos;
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    let p = labels.iter().filter(|&&l| l).count() as u64;
    let n = labels.len() as u64 - p;
    (twice_u, 2 * p * n)
}

/// Area under the ROC curve. `0.5` when either class is missing.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (num, den) = auc_fraction(scores, labels);
    if den == 0 {
        0.5
    } else {
        num as f64 / den as f64
    }
}

/// `1 + #{negatives scoring ≥ positive}`: ties count against the positive.
pub fn rank_of(positive: f64, negatives: &[f64]) -> usize {
    1 + negatives.iter().filter(|&&n| n >= positive).count()
}

pub fn recall_at_k(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

pub fn mrr(ranks: &[usize]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}
