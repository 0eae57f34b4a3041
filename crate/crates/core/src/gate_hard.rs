//! Hard (step-function) IDK gating and the bottom-up budgeted grid search.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cohort::{StageDataset, StageSample};
use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::math;
use crate::table::LevelMatrix;

/// IDK cutoffs of one stage; `cutoffs[k]` gates level `k` (zero-based). A
/// vector shorter than `K_s - 1` means no upgrade past its last gated level.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HardGateParams {
    pub cutoffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardSearchConfig {
    /// Upper bound on any searched cutoff.
    pub max_a: f64,
    pub n_bins: usize,
}

impl Default for HardSearchConfig {
    fn default() -> Self {
        HardSearchConfig { max_a: 0.95, n_bins: 50 }
    }
}

impl HardSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_a > 0.0 && self.max_a <= 1.0) {
            return Err(Error::Usage(format!("maxA must be in (0, 1], got {}", self.max_a)));
        }
        if self.n_bins < 2 {
            return Err(Error::Usage(format!("nBins must be >= 2, got {}", self.n_bins)));
        }
        Ok(())
    }
}

/// `true` when the prediction is IDK: `q < alpha`.
#[inline]
pub fn hard_gate(q: f64, alpha: f64) -> bool {
    q < alpha
}

/// Level answering a query: the first gated level that is not IDK, or the
/// level just past the last cutoff when every gated level says IDK.
pub fn select_level_hard(confidences: &[f64], cutoffs: &[f64]) -> usize {
    let last = cutoffs.len().min(confidences.len().saturating_sub(1));
    (0..last).find(|&k| !hard_gate(confidences[k], cutoffs[k])).unwrap_or(last)
}

/// Stage probability under hard gating: the selected level's prediction.
pub fn cascade_prob_hard(scores: &[f64], confidences: &[f64], cutoffs: &[f64]) -> f64 {
    scores[select_level_hard(confidences, cutoffs)]
}

/// Binary negative log-likelihood summed over the dataset's timesteps.
pub fn nll_loss(dataset: &StageDataset, mut predictor: impl FnMut(&StageSample) -> f64) -> f64 {
    dataset.samples.iter().map(|s| nll_term(s.label, predictor(s))).sum()
}

#[inline]
pub fn nll_term(label: bool, p: f64) -> f64 {
    let p = math::clamp_prob(p);
    if label {
        -math::ln(p)
    } else {
        -math::ln(1.0 - p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardSearchOutcome {
    pub params: HardGateParams,
    /// Zero-based level each sample ends up assigned to.
    pub assignment: Vec<usize>,
    /// Search-ledger cost: each sample pays its assigned level only.
    pub cost: Cost,
    /// The budget stopped the search before all levels were explored.
    pub exhausted: bool,
    pub warning: Option<String>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + step * i as f64 })
}

/// Bottom-up grid search over IDK cutoffs under a total stage budget.
///
/// `confidences` holds `q_sk` for every sample and level; `costs` are the
/// stage's model costs in level order. All samples start at level 1; at each
/// level the cutoff grows along `LinSpace(minQ, min(maxA, maxQ), nBins)` and
/// the samples newly falling below it move up one level, as long as the
/// replacement cost `cost(m_{k+1}) - cost(m_k)` per moved sample keeps the
/// total within `budget`.
pub fn hard_gating_search(
    confidences: &LevelMatrix,
    costs: &[Cost],
    budget: Cost,
    config: &HardSearchConfig,
) -> Result<HardSearchOutcome> {
    config.validate()?;
    let n = confidences.rows();
    let levels = costs.len();
    if n == 0 {
        return Err(Error::Usage("hard gating search on an empty dataset".into()));
    }
    if confidences.levels() != levels {
        return Err(Error::Usage(format!(
            "confidence table has {} levels, zoo stage has {levels}",
            confidences.levels()
        )));
    }
    let mut assignment = vec![0usize; n];
    let mut cutoffs = Vec::new();
    let mut cost = costs[0] * n as u64;
    if cost > budget {
        return Ok(HardSearchOutcome {
            params: HardGateParams { cutoffs },
            assignment,
            cost,
            exhausted: true,
            warning: Some(format!(
                "total budget {budget} over {n} samples is below their level-1 cost {cost}; every sample stays at level 1"
            )),
        });
    }
    for k in 0..levels - 1 {
        let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == k).collect();
        if members.is_empty() {
            break;
        }
        let (mut min_q, mut max_q) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &members {
            let q = confidences.get(i, k);
            min_q = min_q.min(q);
            max_q = max_q.max(q);
        }
        let max_q = max_q.min(config.max_a);
        if max_q < min_q {
            // maxA lies below every confidence: nobody can be upgraded here.
            cutoffs.push(max_q);
            continue;
        }
        let step_cost = costs[k + 1] - costs[k];
        let mut accepted = min_q;
        for alpha in linspace(min_q, max_q, config.n_bins) {
            let idk: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| {
                    let q = confidences.get(i, k);
                    q >= accepted && q < alpha
                })
                .collect();
            if idk.is_empty() {
                continue;
            }
            let extra = step_cost * idk.len() as u64;
            if cost + extra > budget {
                cutoffs.push(accepted);
                return Ok(HardSearchOutcome {
                    params: HardGateParams { cutoffs },
                    assignment,
                    cost,
                    exhausted: true,
                    warning: None,
                });
            }
            accepted = alpha;
            for i in idk {
                assignment[i] = k + 1;
            }
            cost += extra;
        }
        cutoffs.push(accepted);
    }
    Ok(HardSearchOutcome { params: HardGateParams { cutoffs }, assignment, cost, exhausted: false, warning: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{partition_stage_data, Cohort, Episode};

    fn units(v: &[f64]) -> Vec<Cost> {
        v.iter().map(|&u| Cost::from_units(u).unwrap()).collect()
    }

    #[test]
    fn gate_is_strict() {
        assert!(hard_gate(0.3, 0.5));
        assert!(!hard_gate(0.5, 0.5));
        assert!(!hard_gate(0.9, 0.5));
    }

    #[test]
    fn cascade_probability_examples() {
        assert_eq!(cascade_prob_hard(&[0.42], &[0.0], &[]), 0.42);
        assert_eq!(cascade_prob_hard(&[0.6, 0.8], &[0.2, 0.9], &[0.5]), 0.8);
        assert_eq!(cascade_prob_hard(&[0.6, 0.7, 0.3], &[0.2, 0.1, 0.0], &[0.5, 0.5]), 0.3);
        // missing cutoff: no upgrade past level 2
        assert_eq!(cascade_prob_hard(&[0.6, 0.7, 0.3], &[0.2, 0.1, 0.0], &[0.5]), 0.7);
        assert_eq!(cascade_prob_hard(&[0.6, 0.7, 0.3], &[0.9, 0.1, 0.0], &[0.5, 0.5]), 0.6);
    }

    fn four_step_dataset() -> StageDataset {
        let c = Cohort::new(1, alloc::vec![Episode::new("e", 4, alloc::vec![Some(4)]).unwrap()]).unwrap();
        let mut d = partition_stage_data(&c, 0, 3).unwrap();
        // relabel to the fixture y = (1, 1, 0, 0)
        for (s, y) in d.samples.iter_mut().zip([true, true, false, false]) {
            s.label = y;
        }
        d
    }

    #[test]
    fn nll_examples() {
        let d = four_step_dataset();
        let p = [0.9, 0.8, 0.3, 0.1];
        let loss = nll_loss(&d, |s| p[s.t as usize - 1]);
        let oracle = -(libm::log(0.9) + libm::log(0.8) + libm::log(0.7) + libm::log(0.9));
        assert!((loss - oracle).abs() < 1e-12);
        assert!((loss - 0.790_540).abs() < 1e-6);
        let perfect = nll_loss(&d, |s| if s.label { 1.0 } else { 0.0 });
        assert!(perfect < 1e-10);
        let half = nll_loss(&d, |_| 0.5);
        assert!((half - 4.0 * math::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_model_stage_has_no_cutoffs() {
        let q = LevelMatrix::from_rows(1, alloc::vec![0.1, 0.5, 0.9]);
        let out = hard_gating_search(&q, &units(&[5.0]), Cost::from_units(1e6).unwrap(), &HardSearchConfig::default())
            .unwrap();
        assert!(out.params.cutoffs.is_empty());
    }

    #[test]
    fn budget_below_level_one_returns_empty() {
        let q = LevelMatrix::from_rows(2, alloc::vec![0.1, 0.9, 0.5, 0.5]);
        let out =
            hard_gating_search(&q, &units(&[5.0, 10.0]), Cost::from_units(9.99).unwrap(), &HardSearchConfig::default())
                .unwrap();
        assert!(out.params.cutoffs.is_empty());
        assert!(out.warning.is_some());
        let zero = hard_gating_search(&q, &units(&[5.0, 10.0]), Cost::ZERO, &HardSearchConfig::default()).unwrap();
        assert!(zero.params.cutoffs.is_empty());
    }

    #[test]
    fn small_grid_by_hand() {
        // level-1 confidences 0.1, 0.3, 0.6, 0.8; grid over [0.1, 0.8] with 3 bins: 0.1, 0.45, 0.8
        let q = LevelMatrix::from_rows(2, alloc::vec![0.1, 1.0, 0.3, 1.0, 0.6, 1.0, 0.8, 1.0]);
        let cfg = HardSearchConfig { max_a: 1.0, n_bins: 3 };
        let costs = units(&[1.0, 3.0]);
        // budget 4 + 2*2: moving {0.1, 0.3} costs 4 extra, then {0.6} needs 2 more
        let out = hard_gating_search(&q, &costs, Cost::from_units(8.0).unwrap(), &cfg).unwrap();
        assert_eq!(out.params.cutoffs.len(), 1);
        assert!((out.params.cutoffs[0] - 0.45).abs() < 1e-12);
        assert_eq!(out.assignment, alloc::vec![1, 1, 0, 0]);
        assert!(out.exhausted);
        let out = hard_gating_search(&q, &costs, Cost::from_units(100.0).unwrap(), &cfg).unwrap();
        assert_eq!(out.params.cutoffs, alloc::vec![0.8]);
        assert_eq!(out.assignment, alloc::vec![1, 1, 1, 0]);
        assert_eq!(out.cost, Cost::from_units(10.0).unwrap());
    }

    #[test]
    fn max_a_below_all_confidences() {
        let q = LevelMatrix::from_rows(2, alloc::vec![0.7, 0.0, 0.9, 0.0]);
        let cfg = HardSearchConfig { max_a: 0.5, n_bins: 4 };
        let out = hard_gating_search(&q, &units(&[1.0, 2.0]), Cost::from_units(100.0).unwrap(), &cfg).unwrap();
        assert_eq!(out.params.cutoffs, alloc::vec![0.5]);
        assert_eq!(out.assignment, alloc::vec![0, 0]);
    }

    #[test]
    fn rejects_bad_config_and_empty_data() {
        let q = LevelMatrix::from_rows(2, alloc::vec![0.1, 0.2]);
        let bad = HardSearchConfig { max_a: 0.9, n_bins: 1 };
        assert!(hard_gating_search(&q, &units(&[1.0, 2.0]), Cost::ZERO, &bad).is_err());
        let empty = LevelMatrix::new(2);
        assert!(hard_gating_search(&empty, &units(&[1.0, 2.0]), Cost::ZERO, &HardSearchConfig::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (usize, Vec<f64>, Vec<u32>)> {
            (1usize..4, 1usize..40).prop_flat_map(|(k, n)| {
                (
                    Just(k),
                    proptest::collection::vec(0.0f64..1.0, n * k),
                    proptest::collection::vec(1u32..50, k),
                )
            })
        }

        proptest! {
            #[test]
            fn feasible_monotone_and_in_range((k, qs, mut steps) in instance(), b1 in 0u64..4000, b2 in 0u64..4000, bins in 2usize..8, max_a in 0.05f64..1.0) {
                steps.sort_unstable();
                let mut acc = 0u32;
                let costs: Vec<Cost> = steps.iter().map(|s| { acc += s; Cost::from_units(f64::from(acc)).unwrap() }).collect();
                let q = LevelMatrix::from_rows(k, qs);
                let cfg = HardSearchConfig { max_a, n_bins: bins };
                let (lo, hi) = (b1.min(b2), b1.max(b2));
                let a = hard_gating_search(&q, &costs, Cost::from_units(lo as f64).unwrap(), &cfg).unwrap();
                let b = hard_gating_search(&q, &costs, Cost::from_units(hi as f64).unwrap(), &cfg).unwrap();
                for out in [&a, &b] {
                    let implied: Cost = out.assignment.iter().map(|&l| costs[l]).sum();
                    if !out.params.cutoffs.is_empty() || out.warning.is_none() {
                        prop_assert_eq!(implied, out.cost);
                    }
                    prop_assert!(out.params.cutoffs.len() < k.max(1));
                    for &c in &out.params.cutoffs {
                        prop_assert!((0.0..=max_a).contains(&c));
                    }
                    // assignment agrees with routing through the returned cutoffs
                    for i in 0..q.rows() {
                        if out.warning.is_none() {
                            prop_assert_eq!(select_level_hard(q.row(i), &out.params.cutoffs), out.assignment[i]);
                        }
                    }
                }
                prop_assert!(a.cost <= Cost::from_units(lo as f64).unwrap() || a.warning.is_some());
                for i in 0..q.rows() {
                    prop_assert!(b.assignment[i] >= a.assignment[i]);
                }
                let again = hard_gating_search(&q, &costs, Cost::from_units(hi as f64).unwrap(), &cfg).unwrap();
                prop_assert_eq!(again, b);
            }
        }
    }
}
