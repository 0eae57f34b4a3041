//! Budget sweeps: train one policy per budget, evaluate each end to end and
//! summarise the tradeoff cloud.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cohort::Cohort;
use crate::engine::{Engine, RunMode};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, recommend, tradeoff_hull_area, Evaluation, TradeoffPoint};
use crate::policy::GatePolicy;
use crate::scores::{ConfidenceTable, ScoreMatrix};
use crate::train::{single_model_policy, train_policy, TrainConfig};
use crate::zoo::ModelZoo;

/// Shared data for training and evaluating policies.
#[derive(Debug, Clone, Copy)]
pub struct Bench<'a> {
    pub zoo: &'a ModelZoo,
    pub scores: &'a ScoreMatrix,
    pub train: &'a Cohort,
    pub test: &'a Cohort,
    /// Per-stage distilled confidences covering both cohorts.
    pub distilled: &'a [Option<ConfidenceTable>],
    pub mode: RunMode,
}

impl Bench<'_> {
    pub fn evaluate(&self, zoo: &ModelZoo, policy: &GatePolicy) -> Result<Evaluation> {
        let engine = Engine::new(zoo, policy, self.scores, self.distilled)?;
        let run = engine.run_cohort(self.test, self.mode)?;
        evaluate(&run, self.test)
    }

    pub fn train_and_evaluate(&self, config: &TrainConfig) -> Result<(GatePolicy, Evaluation)> {
        let (policy, _) = train_policy(self.zoo, self.train, self.scores, self.distilled, config)?;
        let eval = self.evaluate(self.zoo, &policy)?;
        Ok((policy, eval))
    }

    /// Always-most-expensive baseline: the top model of every stage alone.
    pub fn baseline(&self, config: &TrainConfig) -> Result<(GatePolicy, Evaluation)> {
        let top = self.zoo.top_only();
        let policy = single_model_policy(&top, self.train, self.scores, config)?;
        let eval = self.evaluate(&top, &policy)?;
        Ok((policy, eval))
    }
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub point: TradeoffPoint,
    pub policy: GatePolicy,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub entries: Vec<SweepEntry>,
    /// Budgets that failed, with the error message; the sweep carries on.
    pub failures: Vec<(f64, String)>,
    /// Hull area in (cost, AUC x 100) units.
    pub hull_area: f64,
    /// Index into `entries` of the recommended point.
    pub recommended: Option<usize>,
}

impl SweepOutcome {
    pub fn points(&self) -> Vec<TradeoffPoint> {
        self.entries.iter().map(|e| e.point.clone()).collect()
    }

    pub fn max_auc(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.point.auc).reduce(f64::max)
    }
}

pub fn sweep(budgets: &[f64], config: &TrainConfig, bench: &Bench<'_>) -> Result<SweepOutcome> {
    if budgets.is_empty() {
        return Err(Error::Usage("budget sweep needs at least one budget".into()));
    }
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for &budget in budgets {
        let cfg = TrainConfig { budget, ..config.clone() };
        match bench.train_and_evaluate(&cfg) {
            Ok((policy, evaluation)) => entries.push(SweepEntry {
                point: TradeoffPoint { budget, cost: evaluation.cost_per_call, auc: evaluation.auc, policy: None },
                policy,
                evaluation,
            }),
            Err(e) => failures.push((budget, format!("{e}"))),
        }
    }
    let points: Vec<TradeoffPoint> = entries.iter().map(|e| e.point.clone()).collect();
    Ok(SweepOutcome { hull_area: tradeoff_hull_area(&points), recommended: recommend(&points), entries, failures })
}
