//! Classification metrics and seed aggregation.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// ROC-AUC through the Mann–Whitney rank statistic; tied scores share their
/// average rank. Returns `None` when either class is absent.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie block i..=j shares the mean rank
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Binary AUC on the class-1 probability, or the macro one-vs-rest mean over
/// classes present in `labels` for more than two classes.
pub fn multiclass_roc_auc(probs: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let classes = probs.first()?.len();
    if classes == 2 {
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        return roc_auc(&scores, &pos);
    }
    let mut total = 0.0;
    let mut counted = 0;
    for c in 0..classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        if let Some(a) = roc_auc(&scores, &pos) {
            total += a;
            counted += 1;
        }
    }
    (counted > 0).then(|| total / counted as f64)
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(pred.len(), labels.len());
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / pred.len() as f64
}

/// Unweighted mean of per-class F1 over classes that occur in either
/// predictions or labels.
pub fn macro_f1(pred: &[usize], labels: &[usize], classes: usize) -> f64 {
    assert_eq!(pred.len(), labels.len());
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fneg = vec![0usize; classes];
    for (&p, &y) in pred.iter().zip(labels) {
        if p == y {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fneg[y] += 1;
        }
    }
    let mut total = 0.0;
    let mut counted = 0;
    for c in 0..classes {
        let denom = 2 * tp[c] + fp[c] + fneg[c];
        if denom == 0 {
            continue;
        }
        total += 2.0 * tp[c] as f64 / denom as f64;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Scores of one evaluation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub roc_auc: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub loss: f64,
}

impl Scores {
    /// `probs[i]` is the predicted class distribution for item `i`.
    /// An AUC that is undefined (single-class labels) is reported as 0.5.
    pub fn from_predictions(probs: &[Vec<f64>], labels: &[usize], loss: f64) -> Scores {
        let classes = probs.first().map_or(0, |p| p.len());
        let pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        Scores {
            roc_auc: multiclass_roc_auc(probs, labels).unwrap_or(0.5),
            accuracy: accuracy(&pred, labels),
            macro_f1: macro_f1(&pred, labels, classes),
            loss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation. Values are sorted before
/// summation so the result does not depend on input order.
pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: 0.0, std: 0.0 };
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    MeanStd {
        mean,
        std: libm::sqrt(sq.iter().sum::<f64>() / n),
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Aggregate of per-seed test scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub runs: usize,
    pub roc_auc: MeanStd,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
}

pub fn seed_sweep(records: &[Scores]) -> AggregateScores {
    let pick = |f: fn(&Scores) -> f64| mean_std(&records.iter().map(f).collect::<Vec<_>>());
    AggregateScores {
        runs: records.len(),
        roc_auc: pick(|s| s.roc_auc),
        accuracy: pick(|s| s.accuracy),
        macro_f1: pick(|s| s.macro_f1),
    }
}
