//! The model zoo: per-stage ordered candidate models and their costs.
//!
//! Models are stand-ins backed by score columns; nothing here runs a network.
//! Public accessors take zero-based stage and level indices while
//! [`ModelSpec`] keeps the one-based numbers used in manifests.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cost::Cost;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    /// One-based stage number.
    pub stage: usize,
    /// One-based level within the stage.
    pub level: usize,
    pub cost: Cost,
    /// Advisory validation AUC, only used for the sortedness check.
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelZoo {
    stages: Vec<Vec<ModelSpec>>,
    dkd_cost: Vec<Cost>,
}

impl ModelZoo {
    /// Builds and validates a zoo. `dkd_costs` maps one-based stage numbers
    /// to the cost of one surrogate call; stages without an entry cost 0.
    pub fn new(models: Vec<ModelSpec>, dkd_costs: &[(usize, Cost)]) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Validation("zoo has no models".into()));
        }
        let mut seen = BTreeMap::new();
        let mut by_stage: BTreeMap<usize, Vec<ModelSpec>> = BTreeMap::new();
        for m in models {
            if m.stage == 0 || m.level == 0 {
                return Err(Error::Validation(format!(
                    "model {}: stage and level are one-based",
                    m.id
                )));
            }
            if m.cost == Cost::ZERO {
                return Err(Error::Validation(format!("model {}: cost must be > 0", m.id)));
            }
            if let Some(auc) = m.val_auc {
                if !(0.0..=1.0).contains(&auc) {
                    return Err(Error::Range(format!("model {}: val_auc {auc} not in [0,1]", m.id)));
                }
            }
            if seen.insert(m.id.clone(), ()).is_some() {
                return Err(Error::Validation(format!("duplicate model id {}", m.id)));
            }
            by_stage.entry(m.stage).or_default().push(m);
        }
        let n_stages = *by_stage.keys().next_back().unwrap();
        let mut stages = Vec::with_capacity(n_stages);
        for s in 1..=n_stages {
            let mut list = by_stage
                .remove(&s)
                .ok_or_else(|| Error::Validation(format!("stage {s} has no models")))?;
            list.sort_by_key(|m| m.level);
            for (i, m) in list.iter().enumerate() {
                if m.level != i + 1 {
                    return Err(Error::Validation(format!(
                        "stage {s}: levels must be contiguous and unique from 1, found level {} at position {}",
                        m.level,
                        i + 1
                    )));
                }
            }
            for pair in list.windows(2) {
                let (lo, hi) = (&pair[0], &pair[1]);
                if hi.cost <= lo.cost {
                    return Err(Error::Validation(format!(
                        "stage {s}: costs must be strictly increasing, but {} (level {}, cost {}) is followed by {} (level {}, cost {})",
                        lo.id, lo.level, lo.cost, hi.id, hi.level, hi.cost
                    )));
                }
                if let (Some(a), Some(b)) = (lo.val_auc, hi.val_auc) {
                    if b < a {
                        return Err(Error::Validation(format!(
                            "stage {s}: validation AUC must be non-decreasing, but {} ({a}) is followed by {} ({b})",
                            lo.id, hi.id
                        )));
                    }
                }
            }
            stages.push(list);
        }
        let mut dkd_cost = alloc::vec![Cost::ZERO; n_stages];
        for &(s, c) in dkd_costs {
            if s == 0 || s > n_stages {
                return Err(Error::Validation(format!("surrogate cost given for unknown stage {s}")));
            }
            dkd_cost[s - 1] = c;
        }
        Ok(ModelZoo { stages, dkd_cost })
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Number of models `K_s` at zero-based stage `s`.
    pub fn levels(&self, s: usize) -> usize {
        self.stages[s].len()
    }

    pub fn stage(&self, s: usize) -> &[ModelSpec] {
        &self.stages[s]
    }

    pub fn model(&self, s: usize, k: usize) -> &ModelSpec {
        &self.stages[s][k]
    }

    pub fn cost(&self, s: usize, k: usize) -> Cost {
        self.stages[s][k].cost
    }

    pub fn stage_costs(&self, s: usize) -> Vec<Cost> {
        self.stages[s].iter().map(|m| m.cost).collect()
    }

    pub fn dkd_cost(&self, s: usize) -> Cost {
        self.dkd_cost[s]
    }

    pub fn model_count(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }

    /// All models in column order (stage-major, then level).
    pub fn models(&self) -> impl Iterator<Item = &ModelSpec> {
        self.stages.iter().flatten()
    }

    /// Flat column index of `(s, k)` in a score matrix built for this zoo.
    pub fn column(&self, s: usize, k: usize) -> usize {
        self.stages[..s].iter().map(Vec::len).sum::<usize>() + k
    }

    /// Zero-based `(stage, level)` of a model id.
    pub fn locate(&self, id: &str) -> Option<(usize, usize)> {
        self.stages.iter().enumerate().find_map(|(s, list)| {
            list.iter().position(|m| m.id == id).map(|k| (s, k))
        })
    }

    /// A zoo keeping only the most expensive model of every stage, re-levelled to 1.
    pub fn top_only(&self) -> ModelZoo {
        let stages = self
            .stages
            .iter()
            .map(|list| {
                let mut top = list.last().unwrap().clone();
                top.level = 1;
                alloc::vec![top]
            })
            .collect();
        ModelZoo { stages, dkd_cost: self.dkd_cost.clone() }
    }

    /// Maps each column of `self` to the column of the same model id in `other`.
    pub fn columns_in(&self, other: &ModelZoo) -> Option<Vec<usize>> {
        self.models()
            .map(|m| other.locate(&m.id).map(|(s, k)| other.column(s, k)))
            .collect()
    }
}
