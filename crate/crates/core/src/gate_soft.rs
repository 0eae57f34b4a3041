//! Soft (ReLU) gating: mixture-of-experts stage probability, the
//! cost/sparsity Lagrangian and its minibatch SGD trainer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate_hard::nll_term;
use crate::math;
use crate::table::LevelMatrix;

/// Per-level gate coefficients `(a_k, b_k)` of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftGateParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl SoftGateParams {
    /// `a = 1`, `b = 0.5` for every level.
    pub fn initial(levels: usize) -> Self {
        SoftGateParams { a: vec![1.0; levels], b: vec![0.5; levels] }
    }

    pub fn levels(&self) -> usize {
        self.a.len()
    }

    /// Gate weight of every level for one sample's confidences.
    pub fn weights_into(&self, q: &[f64], out: &mut [f64]) {
        for k in 0..self.levels() {
            out[k] = soft_gate(q[k], self.a[k], self.b[k]);
        }
    }

    pub fn weights(&self, q: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.levels()];
        self.weights_into(q, &mut w);
        w
    }

    fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.b).all(|v| v.is_finite())
    }
}

/// `ReLU(a q - b)`.
#[inline]
pub fn soft_gate(q: f64, a: f64, b: f64) -> f64 {
    let z = a * q - b;
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Gate-weighted average of the level predictions; level 1 answers alone
/// when every gate is closed.
pub fn mixture_prob(scores: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return scores[0];
    }
    let p = scores.iter().zip(weights).map(|(p, w)| p * w).sum::<f64>() / total;
    // keep the convex combination inside the hull despite rounding
    let (lo, hi) = scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    p.clamp(lo, hi)
}

/// Serving level: the largest gate weight, lowest level on ties, level 1
/// when all gates are closed.
pub fn serve_level(weights: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..weights.len() {
        if weights[k] > weights[best] {
            best = k;
        }
    }
    best
}

/// Expected cost summed over samples: one surrogate call plus the
/// normalised-weight average of model costs (level-1 cost when all gates
/// are closed).
pub fn soft_cost(weights: &LevelMatrix, costs: &[f64], dkd_cost: f64) -> f64 {
    weights.iter_rows().map(|w| dkd_cost + expected_model_cost(w, costs)).sum()
}

fn expected_model_cost(w: &[f64], costs: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        costs[0]
    } else {
        w.iter().zip(costs).map(|(w, c)| w * c).sum::<f64>() / total
    }
}

/// `max(0, cost - budget)^2`.
pub fn cost_loss(expected_cost: f64, budget: f64) -> f64 {
    let excess = (expected_cost - budget).max(0.0);
    excess * excess
}

/// L1 norm of all gate activations (they are non-negative).
pub fn sparse_loss(weights: &LevelMatrix) -> f64 {
    weights.iter_rows().flatten().map(|w| w.abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftTrainConfig {
    pub lambda: f64,
    pub mu: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Epochs without a new best loss before the learning rate is halved.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SoftTrainConfig {
    fn default() -> Self {
        SoftTrainConfig { lambda: 10.0, mu: 0.01, epochs: 200, learning_rate: 0.1, patience: 5, batch_size: 256, seed: 7 }
    }
}

impl SoftTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Usage("epochs, patience and batch size must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.mu >= 0.0 && self.learning_rate > 0.0) {
            return Err(Error::Usage("lambda and mu must be >= 0 and the learning rate > 0".into()));
        }
        Ok(())
    }
}

/// Stage training data for soft gating.
///
/// The objective is averaged per sample:
/// `mean NLL + lambda * cost_loss(E[cost] / C, c_s / C) + mu * mean L1`,
/// where `E[cost]` is the mean per-call expected cost and `C` the cost of
/// the stage's most expensive model.
#[derive(Debug, Clone)]
pub struct SoftObjective<'a> {
    pub confidences: &'a LevelMatrix,
    pub scores: &'a LevelMatrix,
    pub labels: &'a [bool],
    pub costs: Vec<f64>,
    pub dkd_cost: f64,
    /// Per-call stage budget `c_s`.
    pub budget: f64,
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveValue {
    pub nll: f64,
    pub cost: f64,
    pub cost_penalty: f64,
    pub sparse: f64,
    pub total: f64,
}

impl<'a> SoftObjective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        confidences: &'a LevelMatrix,
        scores: &'a LevelMatrix,
        labels: &'a [bool],
        costs: Vec<f64>,
        dkd_cost: f64,
        budget: f64,
        lambda: f64,
        mu: f64,
    ) -> Result<Self> {
        let n = labels.len();
        if confidences.rows() != n || scores.rows() != n {
            return Err(Error::Usage("soft objective inputs have mismatched row counts".into()));
        }
        if confidences.levels() != costs.len() || scores.levels() != costs.len() {
            return Err(Error::Usage("soft objective inputs have mismatched level counts".into()));
        }
        if n == 0 {
            return Err(Error::Usage("soft gating on an empty dataset".into()));
        }
        Ok(SoftObjective { confidences, scores, labels, costs, dkd_cost, budget, lambda, mu })
    }

    fn cost_scale(&self) -> f64 {
        self.costs.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE)
    }

    /// Objective value over all samples.
    pub fn value(&self, params: &SoftGateParams) -> ObjectiveValue {
        let rows: Vec<usize> = (0..self.labels.len()).collect();
        self.value_and_grad(params, &rows, None)
    }

    /// Objective over the given rows; accumulates `d/da` and `d/db` into
    /// `grad` when provided (laid out as `[a_0.., b_0..]`).
    pub fn value_and_grad(&self, params: &SoftGateParams, rows: &[usize], grad: Option<&mut [f64]>) -> ObjectiveValue {
        let levels = self.costs.len();
        let n = rows.len() as f64;
        let scale = self.cost_scale();
        let mut w = vec![0.0; levels];
        let mut nll = 0.0;
        let mut cost = 0.0;
        let mut sparse = 0.0;
        // per-sample dE[cost]/dw, kept to apply the (nonlinear) penalty afterwards
        let mut dcost_dw: Vec<f64> = Vec::new();
        let want = grad.is_some();
        if want {
            dcost_dw.resize(rows.len() * levels, 0.0);
        }
        let mut local = vec![0.0; 2 * levels];
        for (r, &i) in rows.iter().enumerate() {
            let q = self.confidences.row(i);
            let p = self.scores.row(i);
            params.weights_into(q, &mut w);
            let total: f64 = w.iter().sum();
            let label = self.labels[i];
            sparse += total;
            if total <= 0.0 {
                nll += nll_term(label, p[0]);
                cost += self.dkd_cost + self.costs[0];
            } else {
                let mix: f64 = p.iter().zip(&w).map(|(p, w)| p * w).sum::<f64>() / total;
                let mean_cost: f64 = self.costs.iter().zip(&w).map(|(c, w)| c * w).sum::<f64>() / total;
                nll += nll_term(label, mix);
                cost += self.dkd_cost + mean_cost;
                if want {
                    let clamped = math::clamp_prob(mix);
                    let dnll_dmix = if clamped != mix {
                        0.0
                    } else if label {
                        -1.0 / mix
                    } else {
                        1.0 / (1.0 - mix)
                    };
                    for k in 0..levels {
                        dcost_dw[r * levels + k] = (self.costs[k] - mean_cost) / total;
                        let open = params.a[k] * q[k] - params.b[k] > 0.0;
                        if !open {
                            continue;
                        }
                        let dw = dnll_dmix * (p[k] - mix) / total + self.mu;
                        local[k] += dw * q[k];
                        local[levels + k] -= dw;
                    }
                }
            }
        }
        let mean_cost = cost / n;
        let excess = (mean_cost - self.budget) / scale;
        let penalty = cost_loss(mean_cost / scale, self.budget / scale);
        let value = ObjectiveValue {
            nll: nll / n,
            cost: mean_cost,
            cost_penalty: penalty,
            sparse: sparse / n,
            total: nll / n + self.lambda * penalty + self.mu * sparse / n,
        };
        if let Some(g) = grad {
            // d(lambda * penalty)/dE = lambda * 2 * excess / scale, E = mean cost
            let dpen = if excess > 0.0 { self.lambda * 2.0 * excess / scale } else { 0.0 };
            for (r, &i) in rows.iter().enumerate() {
                if dpen == 0.0 {
                    break;
                }
                let q = self.confidences.row(i);
                for k in 0..levels {
                    if params.a[k] * q[k] - params.b[k] > 0.0 {
                        let d = dpen * dcost_dw[r * levels + k];
                        local[k] += d * q[k];
                        local[levels + k] -= d;
                    }
                }
            }
            for (gi, li) in g.iter_mut().zip(&local) {
                *gi += li / n;
            }
        }
        value
    }

    /// Mean per-call serving cost when every sample is served by its
    /// argmax-weight level after the mandatory level-1 call.
    pub fn serving_cost(&self, params: &SoftGateParams) -> f64 {
        let mut total = 0.0;
        for i in 0..self.labels.len() {
            let level = serve_level(&params.weights(self.confidences.row(i)));
            total += self.dkd_cost + self.costs[0] + if level > 0 { self.costs[level] } else { 0.0 };
        }
        total / self.labels.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftTrainOutcome {
    pub params: SoftGateParams,
    pub initial: ObjectiveValue,
    pub best: ObjectiveValue,
    /// Full-data objective after every epoch.
    pub history: Vec<f64>,
    pub final_learning_rate: f64,
}

/// Minibatch SGD on `(a, b)` starting from `a = 1, b = 0.5`. The learning
/// rate halves whenever the best full-data loss has not improved for
/// `patience` epochs; the best parameters seen are returned.
pub fn soft_gating_train(objective: &SoftObjective<'_>, config: &SoftTrainConfig) -> Result<SoftTrainOutcome> {
    config.validate()?;
    let levels = objective.costs.len();
    let mut params = SoftGateParams::initial(levels);
    let initial = objective.value(&params);
    check_finite(&initial, 0, config.learning_rate)?;
    let mut best = (params.clone(), initial);
    let mut lr = config.learning_rate;
    let mut stale = 0;
    let mut history = Vec::with_capacity(config.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..objective.labels.len()).collect();
    let mut grad = vec![0.0; 2 * levels];
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            objective.value_and_grad(&params, batch, Some(&mut grad));
            for k in 0..levels {
                params.a[k] -= lr * grad[k];
                params.b[k] -= lr * grad[levels + k];
            }
            if !params.is_finite() {
                return Err(Error::Numerical(format!(
                    "soft gating parameters diverged at epoch {epoch} (lr {lr})"
                )));
            }
        }
        let value = objective.value(&params);
        check_finite(&value, epoch, lr)?;
        history.push(value.total);
        if value.total < best.1.total {
            best = (params.clone(), value);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                lr *= 0.5;
                stale = 0;
            }
        }
    }
    Ok(SoftTrainOutcome { params: best.0, initial, best: best.1, history, final_learning_rate: lr })
}

fn check_finite(v: &ObjectiveValue, epoch: usize, lr: f64) -> Result<()> {
    let terms = [("nll", v.nll), ("cost", v.cost_penalty), ("sparse", v.sparse)];
    match terms.iter().find(|(_, x)| !x.is_finite()) {
        None => Ok(()),
        Some((name, x)) => Err(Error::Numerical(format!(
            "soft gating loss term {name} = {x} at epoch {epoch} (lr {lr})"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gate_examples() {
        assert!((soft_gate(0.8, 1.0, 0.5) - 0.3).abs() < 1e-15);
        assert_eq!(soft_gate(0.3, 1.0, 0.5), 0.0);
        assert_eq!(soft_gate(0.5, 2.0, 0.5), 0.5);
    }

    #[test]
    fn mixture_examples() {
        assert!((mixture_prob(&[0.2, 0.8], &[0.3, 0.3]) - 0.5).abs() < 1e-15);
        assert_eq!(mixture_prob(&[0.7, 0.1], &[1.0, 0.0]), 0.7);
        assert_eq!(mixture_prob(&[0.6, 0.9], &[0.0, 0.0]), 0.6);
    }

    #[test]
    fn cost_examples() {
        let w = LevelMatrix::from_rows(2, vec![1.0, 0.0]);
        assert_eq!(soft_cost(&w, &[5.0, 268.0], 2.0), 7.0);
        let w = LevelMatrix::from_rows(2, vec![0.5, 0.5]);
        assert_eq!(soft_cost(&w, &[5.0, 268.0], 0.0), 136.5);
        let w = LevelMatrix::from_rows(2, vec![0.0, 0.0]);
        assert_eq!(soft_cost(&w, &[5.0, 268.0], 2.0), 7.0);
        assert_eq!(cost_loss(90.0, 100.0), 0.0);
        assert_eq!(cost_loss(110.0, 100.0), 100.0);
        assert_eq!(cost_loss(100.0, 100.0), 0.0);
    }

    #[test]
    fn sparse_examples() {
        assert_eq!(sparse_loss(&LevelMatrix::from_rows(2, vec![0.0; 4])), 0.0);
        let w = LevelMatrix::from_rows(2, vec![0.3, 0.2, 0.1, 0.0]);
        assert!((sparse_loss(&w) - 0.6).abs() < 1e-15);
        let w2 = LevelMatrix::from_rows(2, vec![0.6, 0.4, 0.2, 0.0]);
        assert!((sparse_loss(&w2) - 2.0 * sparse_loss(&w)).abs() < 1e-15);
    }

    #[test]
    fn serve_level_picks_argmax() {
        assert_eq!(serve_level(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(serve_level(&[0.1, 0.3, 0.3]), 1);
        assert_eq!(serve_level(&[0.4, 0.3, 0.2]), 0);
    }

    #[test]
    fn single_model_stage_reduces_to_plain_nll() {
        let q = LevelMatrix::from_rows(1, vec![0.9, 0.2, 0.7]);
        let p = LevelMatrix::from_rows(1, vec![0.8, 0.3, 0.6]);
        let y = [true, false, true];
        let obj = SoftObjective::new(&q, &p, &y, vec![5.0], 0.0, 100.0, 0.0, 0.0).unwrap();
        let plain = (nll_term(true, 0.8) + nll_term(false, 0.3) + nll_term(true, 0.6)) / 3.0;
        for params in [SoftGateParams::initial(1), SoftGateParams { a: vec![3.0], b: vec![-1.0] }] {
            assert!((obj.value(&params).total - plain).abs() < 1e-12);
        }
        let out = soft_gating_train(&obj, &SoftTrainConfig { epochs: 5, ..Default::default() }).unwrap();
        assert!((out.best.total - plain).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mixture_within_hull(p in proptest::collection::vec(0.0f64..1.0, 1..5), w in proptest::collection::vec(0.0f64..2.0, 5)) {
            let w = &w[..p.len()];
            let m = mixture_prob(&p, w);
            let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo && m <= hi);
        }
    }
}
