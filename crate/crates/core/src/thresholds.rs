//! ROC construction and closest-to-(0,1) operating point selection.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One operating point: predict positive iff `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub true_pos: usize,
    pub false_pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub positives: usize,
    pub negatives: usize,
    /// Sorted by threshold, `-inf` first and `+inf` last.
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn tpr(&self, p: &RocPoint) -> f64 {
        p.true_pos as f64 / self.positives as f64
    }

    pub fn fpr(&self, p: &RocPoint) -> f64 {
        p.false_pos as f64 / self.negatives as f64
    }

    /// Squared distance to (0, 1) scaled by `(P * N)^2`, exact in integers.
    fn scaled_distance(&self, p: &RocPoint) -> u128 {
        let miss = (self.positives - p.true_pos) as u128 * self.negatives as u128;
        let fp = p.false_pos as u128 * self.positives as u128;
        miss * miss + fp * fp
    }
}

/// Thresholds are `-inf`, the midpoints between consecutive distinct
/// scores, and `+inf`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Usage("scores and labels differ in length".into()));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Range(alloc::format!("score {i} is NaN")));
    }
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Validation(alloc::format!(
            "ROC needs both classes ({positives} positives, {negatives} negatives)"
        )));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    // sweep from the highest score down; each distinct value opens a threshold
    let mut descending = Vec::new();
    descending.push(RocPoint { threshold: f64::INFINITY, true_pos: 0, false_pos: 0 });
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == v {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = if i < pairs.len() { 0.5 * (v + pairs[i].0) } else { f64::NEG_INFINITY };
        descending.push(RocPoint { threshold, true_pos: tp, false_pos: fp });
    }
    descending.reverse();
    Ok(RocCurve { positives, negatives, points: descending })
}

/// Operating point minimising the Euclidean distance to (FPR, TPR) = (0, 1),
/// ties resolved to the smallest threshold.
pub fn closest_to_01(curve: &RocCurve) -> RocPoint {
    let mut best = curve.points[0];
    let mut best_d = curve.scaled_distance(&best);
    for p in &curve.points[1..] {
        let d = curve.scaled_distance(p);
        if d < best_d {
            best = *p;
            best_d = d;
        }
    }
    best
}

/// Threshold for `p >= theta` decisions on probabilities; `-inf` maps to 0.
pub fn ick1_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let point = closest_to_01(&roc_curve(scores, labels)?);
    Ok(point.threshold.max(0.0))
}
