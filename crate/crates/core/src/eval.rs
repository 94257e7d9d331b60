//! Decision smoothing and classification metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Class;

/// Trailing window, in decision steps, used when none is configured.
pub const DEFAULT_SMOOTHING_WINDOW: usize = 15;

/// Causal moving average of probability vectors over the last `window`
/// steps, renormalized to sum to one.
///
/// A step whose average favours a class that is neither the previous smoothed
/// decision nor the current raw decision repeats the previous output, so the
/// smoothed decision only ever moves to the current raw decision and never
/// flips more often than the raw sequence.
pub fn smooth_probabilities(probs: &[Vec<f64>], window: usize) -> Result<Vec<Vec<f64>>> {
    if window == 0 {
        return Err(Error::InvalidConfig("smoothing window must be at least 1".into()));
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(probs.len());
    for t in 0..probs.len() {
        let lo = (t + 1).saturating_sub(window);
        let avg = if lo == t {
            probs[t].clone()
        } else {
            let mut avg = vec![0.0; probs[t].len()];
            for p in &probs[lo..=t] {
                if p.len() != avg.len() {
                    return Err(Error::ShapeMismatch("probability vectors differ in length".into()));
                }
                for (a, v) in avg.iter_mut().zip(p) {
                    *a += v;
                }
            }
            let total: f64 = avg.iter().sum();
            if total > 0.0 {
                avg.iter_mut().for_each(|a| *a /= total);
            }
            avg
        };
        let next = match out.last() {
            Some(prev) => {
                let d = argmax(&avg);
                if d == argmax(prev) || d == argmax(&probs[t]) {
                    avg
                } else {
                    prev.clone()
                }
            }
            None => avg,
        };
        out.push(next);
    }
    Ok(out)
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

pub fn decisions(probs: &[Vec<f64>]) -> Vec<usize> {
    probs.iter().map(|p| argmax(p)).collect()
}

/// Number of consecutive steps whose decision differs.
pub fn flip_count(decisions: &[usize]) -> usize {
    decisions.windows(2).filter(|w| w[0] != w[1]).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: usize,
    pub accuracy: f64,
    /// Child-class precision.
    pub precision: f64,
    /// Child detection rate.
    pub tpr: f64,
    /// Share of empty scenes classified as child.
    pub fpr: f64,
    /// Child-class F1.
    pub f1: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]` in `Empty, Adult, Child` order.
    pub confusion: [[usize; 3]; 3],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Accuracy, child-class precision/recall/F1, empty-to-child false positive
/// rate and the confusion matrix. Ratios with an empty denominator are 0.
pub fn compute_metrics(predictions: &[Class], labels: &[Class]) -> Result<Metrics> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (p, y) in predictions.iter().zip(labels) {
        confusion[y.index()][p.index()] += 1;
    }
    let total = predictions.len();
    let correct: usize = (0..3).map(|i| confusion[i][i]).sum();
    let row = |i: usize| confusion[i].iter().sum::<usize>();
    let col = |j: usize| (0..3).map(|i| confusion[i][j]).sum::<usize>();
    let f1_of = |c: usize| harmonic(ratio(confusion[c][c], col(c)), ratio(confusion[c][c], row(c)));
    let child = Class::Child.index();
    let empty = Class::Empty.index();
    let precision = ratio(confusion[child][child], col(child));
    let tpr = ratio(confusion[child][child], row(child));
    Ok(Metrics {
        total,
        accuracy: ratio(correct, total),
        precision,
        tpr,
        fpr: ratio(confusion[empty][child], row(empty)),
        f1: harmonic(precision, tpr),
        macro_f1: (0..3).map(f1_of).sum::<f64>() / 3.0,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value count as positive.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    /// Set when only one class is present; rates for the missing class are 0.
    pub degenerate: bool,
}

impl Roc {
    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }
}

/// ROC curve of `scores` against binary `labels`, sweeping the threshold over
/// the distinct scores from high to low. Starts at (0, 0) and ends at (1, 1).
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no scores for a ROC curve".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("ROC scores must be finite".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: ratio(fp, neg),
            tpr: ratio(tp, pos),
            threshold,
        });
    }
    let degenerate = pos == 0 || neg == 0;
    if degenerate {
        log::warn!("ROC curve from a single class ({pos} positive, {neg} negative)");
        let last = points.last().copied().unwrap_or(points[0]);
        if (last.fpr, last.tpr) != (1.0, 1.0) {
            points.push(RocPoint {
                fpr: 1.0,
                tpr: 1.0,
                threshold: f64::NEG_INFINITY,
            });
        }
    }
    Ok(Roc { points, degenerate })
}

/// One `metric,value` row per scalar metric.
pub fn metrics_csv(m: &Metrics) -> String {
    let mut s = String::from("metric,value\n");
    for (name, v) in [
        ("total", m.total as f64),
        ("accuracy", m.accuracy),
        ("precision", m.precision),
        ("tpr", m.tpr),
        ("fpr", m.fpr),
        ("f1", m.f1),
        ("macro_f1", m.macro_f1),
    ] {
        let _ = writeln!(s, "{name},{v}");
    }
    s
}

pub fn confusion_csv(m: &Metrics) -> String {
    let mut s = String::from("true\\predicted,empty,adult,child\n");
    for c in Class::ALL {
        let r = m.confusion[c.index()];
        let _ = writeln!(s, "{c},{},{},{}", r[0], r[1], r[2]);
    }
    s
}

pub fn roc_csv(roc: &Roc) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &roc.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_one_is_identity_and_constant_is_fixed() {
        let seq = vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1], vec![0.1, 0.8, 0.1]];
        assert_eq!(smooth_probabilities(&seq, 1).unwrap(), seq);
        let constant = vec![vec![0.25, 0.25, 0.5]; 20];
        for (a, b) in smooth_probabilities(&constant, 15).unwrap().iter().zip(&constant) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        assert!(smooth_probabilities(&seq, 0).is_err());
    }

    #[test]
    fn metric_examples() {
        let y = [Class::Empty, Class::Adult, Class::Child, Class::Child];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!((m.accuracy, m.f1, m.fpr, m.tpr), (1.0, 1.0, 0.0, 1.0));

        // one child hit, one child missed, one false child alarm
        let labels = [Class::Child, Class::Child, Class::Adult, Class::Empty];
        let preds = [Class::Child, Class::Adult, Class::Child, Class::Empty];
        let m = compute_metrics(&preds, &labels).unwrap();
        assert_eq!((m.precision, m.tpr), (0.5, 0.5));
        assert!((m.f1 - 0.5).abs() < 1e-15);
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn roc_examples() {
        let roc = roc_points(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(roc.auc(), 1.0);
        let roc = roc_points(&[0.4; 6], &[true, false, true, false, false, true]).unwrap();
        assert!((roc.auc() - 0.5).abs() < 1e-15);
        let first = roc.points[0];
        let last = *roc.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr, last.fpr, last.tpr), (0.0, 0.0, 1.0, 1.0));
        assert!(roc_points(&[0.3, 0.5], &[true, true]).unwrap().degenerate);
    }
}
