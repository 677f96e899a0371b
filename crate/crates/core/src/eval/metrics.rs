use serde::Serialize;

use crate::error::{Error, Result};

/// Square count matrix, rows are true classes and columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        Self {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let classes = (0..counts.len()).map(|i| i.to_string()).collect();
        Self { classes, counts }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub uar: f64,
    pub acc: f64,
    /// Recall of the positive class; binary tasks only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sen: Option<f64>,
    /// Recall of the negative class; binary tasks only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spe: Option<f64>,
}

/// UAR over classes with at least one true sample, accuracy, and for
/// two-class matrices sensitivity/specificity with respect to `positive`.
pub fn metrics(confusion: &Confusion, positive: Option<usize>) -> Result<Metrics> {
    let k = confusion.counts.len();
    if k == 0 || confusion.counts.iter().any(|r| r.len() != k) || confusion.total() == 0 {
        return Err(Error::EmptyConfusion);
    }
    let rows = confusion.row_sums();
    let recall = |c: usize| confusion.counts[c][c] as f64 / rows[c] as f64;
    let present: Vec<usize> = (0..k).filter(|&c| rows[c] > 0).collect();
    let uar = present.iter().map(|&c| recall(c)).sum::<f64>() / present.len() as f64;
    let trace: u64 = (0..k).map(|c| confusion.counts[c][c]).sum();
    let acc = trace as f64 / confusion.total() as f64;
    let (sen, spe) = match (k, positive) {
        (2, Some(p)) if p < 2 => {
            let n = 1 - p;
            let r = |c: usize| (rows[c] > 0).then(|| recall(c));
            (r(p), r(n))
        }
        _ => (None, None),
    };
    Ok(Metrics { uar, acc, sen, spe })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are called positive; infinite for
    /// the origin.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Threshold sweep over the distinct scores, highest first, with
/// trapezoidal AUC. Tied scores move both rates at once.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Roc> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::RocSingleClass(format!("{n_pos} positive, {n_neg} negative")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut auc = 0.0;
    let mut t = 0;
    while t < order.len() {
        let s = scores[order[t]];
        while t < order.len() && scores[order[t]] == s {
            if positive[order[t]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            t += 1;
        }
        let prev = points.last().unwrap();
        let (fpr, tpr) = (fp / n_neg, tp / n_pos);
        auc += (fpr - prev.fpr) * (tpr + prev.tpr) / 2.0;
        points.push(RocPoint { fpr, tpr, threshold: s });
    }
    Ok(Roc { points, auc })
}
