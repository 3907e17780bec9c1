//! Confusion counts, threshold metrics and ROC/AUC.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::features::FeatureMatrix;
use crate::scalar::{total_cmp, Scalar};

/// Positive class = success (status 200).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn from_predictions(labels: &[u8], predicted: &[bool]) -> Self {
        let mut c = Self::default();
        for (&y, &p) in labels.iter().zip(predicted) {
            match (y == 1, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Fractions in [0, 1]; `None` where the denominator is zero.
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.tn + o.tn, self.fn_ + o.fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (fpr, tpr), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC points from descending score thresholds; tied scores form one step.
/// `None` unless both classes are present.
pub fn roc_curve<F: Scalar>(scores: &[F], labels: &[u8]) -> Option<RocCurve> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&scores[b], &scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && total_cmp(&scores[order[i]], &s) == Ordering::Equal {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = trapezoid(&points);
    Some(RocCurve { points, auc })
}

pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// AUC as the rank statistic P(score⁺ > score⁻) + ½·P(tie), via midranks.
pub fn auc_rank<F: Scalar>(scores: &[F], labels: &[u8]) -> Option<f64> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos as f64 * neg as f64))
}

/// 1-based ranks with ties sharing their average rank.
pub fn midranks<F: Scalar>(values: &[F]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&values[a], &values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && total_cmp(&values[order[j + 1]], &values[order[i]]) == Ordering::Equal {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Anything that scores a feature row with P(success).
pub trait Classifier<F: Scalar>: Send + Sync {
    fn predict_proba(&self, row: &[F]) -> F;

    fn predict(&self, row: &[F]) -> bool {
        self.predict_proba(row) >= F::half()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc: Option<RocCurve>,
}

impl Evaluation {
    pub fn auc(&self) -> Option<f64> {
        self.roc.as_ref().map(|r| r.auc)
    }
}

pub fn evaluate<F: Scalar, C: Classifier<F> + ?Sized>(model: &C, test: &FeatureMatrix<F>) -> Evaluation {
    let scores: Vec<F> = test.rows().map(|r| model.predict_proba(r)).collect();
    evaluate_scores(&scores, &test.y)
}

pub fn evaluate_scores<F: Scalar>(scores: &[F], labels: &[u8]) -> Evaluation {
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= F::half()).collect();
    let counts = ConfusionCounts::from_predictions(labels, &predicted);
    Evaluation {
        counts,
        accuracy: counts.accuracy(),
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        roc: roc_curve(scores, labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstructed_dev_v1_row() {
        let c = ConfusionCounts::new(32_664 - 4_137, 4_137, 14_807, 0);
        // the reference figures are within one unit of the last digit
        let close = |x: Option<f64>, want: f64| assert!((x.unwrap() * 100.0 - want).abs() <= 0.01 + 1e-9);
        close(c.accuracy(), 91.28);
        close(c.precision(), 87.33);
        close(c.recall(), 100.0);
        close(c.f1(), 93.23);
    }

    #[test]
    fn undefined_metrics_are_explicit() {
        let c = ConfusionCounts::new(0, 0, 5, 0);
        assert_eq!(c.precision(), None);
        assert_eq!(c.recall(), None);
        assert_eq!(c.f1(), None);
        assert_eq!(c.accuracy(), Some(1.0));
        assert_eq!(ConfusionCounts::default().accuracy(), None);
    }

    #[test]
    fn auc_edge_cases() {
        let labels = [0, 0, 1, 1];
        assert_eq!(auc_rank(&[0.1, 0.2, 0.8, 0.9], &labels), Some(1.0));
        assert_eq!(auc_rank(&[0.5f64; 4], &labels), Some(0.5));
        assert_eq!(roc_curve(&[0.5f64; 4], &labels).unwrap().auc, 0.5);
        assert_eq!(auc_rank(&[0.5, 0.5], &[1, 1]), None);
        let roc = roc_curve(&[0.1, 0.4, 0.35, 0.8], &labels).unwrap();
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        assert!((roc.auc - 0.75).abs() < 1e-12);
    }
}
