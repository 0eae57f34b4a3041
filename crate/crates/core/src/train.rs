//! End-to-end policy training: per stage, fit the IDK gate under the stage
//! budget, then fit each model's ICK1 threshold on the population the gate
//! routes to it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cohort::{partition_stage_data, Cohort, StageDataset};
use crate::confidence::{ConfidenceMeasure, DirichletParams};
use crate::cost::Cost;
use crate::dkd::{DkdData, DkdNet};
use crate::error::{Error, Result};
use crate::gate_hard::{hard_gating_search, select_level_hard, HardGateParams, HardSearchConfig};
use crate::gate_soft::{serve_level, soft_gating_train, SoftObjective, SoftTrainConfig};
use crate::policy::{
    BudgetSplit, GateMode, GateOrder, GatePolicy, Ick0Behavior, StageGate, StagePolicy, TransitionTiming, POLICY_VERSION,
};
use crate::scores::{ConfidenceTable, FeatureTable, ScoreMatrix};
use crate::table::LevelMatrix;
use crate::thresholds::ick1_threshold;
use crate::zoo::ModelZoo;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: GateMode,
    pub measure: ConfidenceMeasure,
    pub beta: f64,
    /// Global per-call budget `c`.
    pub budget: f64,
    pub split: BudgetSplit,
    pub early_window: u32,
    pub hard: HardSearchConfig,
    pub soft: SoftTrainConfig,
    pub ick0: Ick0Behavior,
    pub timing: TransitionTiming,
    pub order: GateOrder,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: GateMode::Hard,
            measure: ConfidenceMeasure::MaxProb,
            beta: 100.0,
            budget: 100.0,
            split: BudgetSplit::Equal,
            early_window: 12,
            hard: HardSearchConfig::default(),
            soft: SoftTrainConfig::default(),
            ick0: Ick0Behavior::Stay,
            timing: TransitionTiming::NextStep,
            order: GateOrder::IdkFirst,
        }
    }
}

/// A stage dataset joined with its per-level probabilities and confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTable {
    pub dataset: StageDataset,
    pub scores: LevelMatrix,
    pub confidences: LevelMatrix,
    pub labels: Vec<bool>,
}

/// Builds the stage table; confidences come from `distilled` when given
/// and from the teacher probabilities otherwise.
#[allow(clippy::too_many_arguments)]
pub fn stage_table(
    zoo: &ModelZoo,
    cohort: &Cohort,
    scores: &ScoreMatrix,
    s: usize,
    early_window: u32,
    measure: ConfidenceMeasure,
    beta: f64,
    distilled: Option<&ConfidenceTable>,
) -> Result<StageTable> {
    let dataset = partition_stage_data(cohort, s, early_window)?;
    let levels = zoo.levels(s);
    let cols: Vec<usize> = zoo
        .stage(s)
        .iter()
        .map(|m| scores.column_of(&m.id).ok_or_else(|| Error::Validation(format!("no scores for model {}", m.id))))
        .collect::<Result<_>>()?;
    let mut p = LevelMatrix::new(levels);
    let mut q = LevelMatrix::new(levels);
    let mut row = vec![0.0; levels];
    let mut qrow = vec![0.0; levels];
    for sample in &dataset.samples {
        let ep = &cohort.episodes()[sample.episode];
        let view = scores
            .episode(&ep.id)
            .ok_or_else(|| Error::Coverage(format!("no scores for episode {}", ep.id)))?;
        for k in 0..levels {
            row[k] = view.get(sample.t as usize, cols[k])?;
        }
        match distilled {
            Some(table) => qrow.copy_from_slice(table.row(&ep.id, sample.t as usize)?),
            None => {
                for k in 0..levels {
                    qrow[k] = measure.of_prob(row[k], beta);
                }
            }
        }
        p.push_row(&row);
        q.push_row(&qrow);
    }
    let labels = dataset.samples.iter().map(|s| s.label).collect();
    Ok(StageTable { dataset, scores: p, confidences: q, labels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub samples: usize,
    pub positives: usize,
    pub budget: f64,
    /// Samples routed to each level by the trained gate.
    pub routed: Vec<usize>,
    /// Levels whose threshold fell back to the whole stage population.
    pub threshold_fallback: Vec<bool>,
    pub thresholds: Vec<f64>,
    /// Per-call stage cost the gate implies on the training data.
    pub train_cost: f64,
    pub warning: Option<String>,
    /// Soft gating loss per epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stages: Vec<StageReport>,
}

/// Trains a complete policy. `distilled[s]` must be present for every stage
/// when `config.mode` is soft.
pub fn train_policy(
    zoo: &ModelZoo,
    cohort: &Cohort,
    scores: &ScoreMatrix,
    distilled: &[Option<ConfidenceTable>],
    config: &TrainConfig,
) -> Result<(GatePolicy, TrainReport)> {
    config.hard.validate()?;
    config.soft.validate()?;
    if config.beta.is_nan() || config.beta <= 0.0 {
        return Err(Error::Usage("beta must be positive".into()));
    }
    let budgets = config.split.split(config.budget, zoo)?;
    let mut stages = Vec::new();
    let mut reports = Vec::new();
    for s in 0..zoo.stage_count() {
        let ctx = format!("stage {}", s + 1);
        let table_src = match config.mode {
            GateMode::Hard => None,
            GateMode::Soft => Some(distilled.get(s).and_then(|d| d.as_ref()).ok_or_else(|| {
                Error::Usage(format!("soft gating of stage {} needs distilled confidences", s + 1))
            })?),
        };
        let table = stage_table(zoo, cohort, scores, s, config.early_window, config.measure, config.beta, table_src)
            .map_err(|e| e.context(&ctx))?;
        let (stage, report) = train_stage(zoo, s, &table, budgets[s], config).map_err(|e| e.context(&ctx))?;
        stages.push(stage);
        reports.push(report);
    }
    let policy = GatePolicy {
        version: POLICY_VERSION,
        measure: config.measure,
        beta: config.beta,
        budget: config.budget,
        ick0: config.ick0,
        timing: config.timing,
        order: config.order,
        early_window: config.early_window,
        stages,
    };
    policy.validate(zoo)?;
    Ok((policy, TrainReport { stages: reports }))
}

fn train_stage(
    zoo: &ModelZoo,
    s: usize,
    table: &StageTable,
    budget: f64,
    config: &TrainConfig,
) -> Result<(StagePolicy, StageReport)> {
    let n = table.labels.len();
    let levels = zoo.levels(s);
    if n == 0 {
        return Err(Error::Validation("stage dataset is empty".into()));
    }
    let positives = table.labels.iter().filter(|l| **l).count();
    if positives == 0 || positives == n {
        return Err(Error::Validation(format!(
            "stage dataset has {positives} positive of {n} samples; both classes are required"
        )));
    }
    let (gate, routing, train_cost, warning, history) = match config.mode {
        GateMode::Hard => {
            let total = Cost::from_units(budget)? * n as u64;
            let out = hard_gating_search(&table.confidences, &zoo.stage_costs(s), total, &config.hard)?;
            let routing: Vec<usize> = table
                .confidences
                .iter_rows()
                .map(|q| select_level_hard(q, &out.params.cutoffs))
                .collect();
            let per_call = out.cost.per(n as u64);
            (StageGate::Hard(out.params), routing, per_call, out.warning, Vec::new())
        }
        GateMode::Soft => {
            let costs: Vec<f64> = zoo.stage_costs(s).iter().map(|c| c.units()).collect();
            let objective = SoftObjective::new(
                &table.confidences,
                &table.scores,
                &table.labels,
                costs,
                zoo.dkd_cost(s).units(),
                budget,
                config.soft.lambda,
                config.soft.mu,
            )?;
            let out = soft_gating_train(&objective, &config.soft)?;
            let routing: Vec<usize> =
                table.confidences.iter_rows().map(|q| serve_level(&out.params.weights(q))).collect();
            let per_call = objective.serving_cost(&out.params);
            (StageGate::Soft(out.params), routing, per_call, None, out.history)
        }
    };
    let mut routed = vec![0; levels];
    for &k in &routing {
        routed[k] += 1;
    }
    let mut thresholds = Vec::with_capacity(levels);
    let mut fallback = Vec::with_capacity(levels);
    for k in 0..levels {
        let (mut ps, mut ys) = (Vec::new(), Vec::new());
        for i in (0..n).filter(|&i| routing[i] == k) {
            ps.push(table.scores.get(i, k));
            ys.push(table.labels[i]);
        }
        let both = ys.iter().any(|y| *y) && ys.iter().any(|y| !*y);
        if !both {
            ps = (0..n).map(|i| table.scores.get(i, k)).collect();
            ys = table.labels.clone();
        }
        thresholds.push(ick1_threshold(&ps, &ys)?);
        fallback.push(!both);
    }
    let policy = StagePolicy {
        models: zoo.stage(s).iter().map(|m| m.id.clone()).collect(),
        gate,
        thresholds: thresholds.clone(),
        budget,
        surrogate: None,
    };
    let report = StageReport {
        stage: s + 1,
        samples: n,
        positives,
        budget,
        routed,
        threshold_fallback: fallback,
        thresholds,
        train_cost,
        warning,
        loss_history: history,
    };
    Ok((policy, report))
}

/// Policy routing every stage to its only model: used with
/// [`ModelZoo::top_only`] as the always-most-expensive baseline.
pub fn single_model_policy(
    zoo: &ModelZoo,
    cohort: &Cohort,
    scores: &ScoreMatrix,
    config: &TrainConfig,
) -> Result<GatePolicy> {
    let config = TrainConfig { mode: GateMode::Hard, ..config.clone() };
    let (mut policy, _) = train_policy(zoo, cohort, scores, &[], &config)?;
    for stage in &mut policy.stages {
        stage.gate = StageGate::Hard(HardGateParams::default());
    }
    Ok(policy)
}

/// Surrogate training rows for stage `s`: the stage dataset's features and
/// teacher probabilities, grouped by episode.
pub struct SurrogateRows {
    pub features: Vec<f64>,
    pub dim: usize,
    pub targets: LevelMatrix,
    pub groups: Vec<usize>,
}

impl SurrogateRows {
    pub fn data(&self) -> DkdData<'_> {
        DkdData { features: &self.features, dim: self.dim, targets: &self.targets, groups: &self.groups }
    }
}

pub fn surrogate_rows(
    zoo: &ModelZoo,
    cohort: &Cohort,
    scores: &ScoreMatrix,
    features: &FeatureTable,
    s: usize,
    early_window: u32,
) -> Result<SurrogateRows> {
    let table = stage_table(zoo, cohort, scores, s, early_window, ConfidenceMeasure::MaxProb, 1.0, None)?;
    let mut rows = Vec::with_capacity(table.labels.len() * features.dim());
    for sample in &table.dataset.samples {
        let ep = &cohort.episodes()[sample.episode];
        rows.extend_from_slice(features.row(&ep.id, sample.t as usize)?);
    }
    Ok(SurrogateRows {
        features: rows,
        dim: features.dim(),
        targets: table.scores,
        groups: table.dataset.samples.iter().map(|s| s.episode).collect(),
    })
}

/// Runs the surrogate over every timestep of every episode and stores the
/// rescaled confidence of each head.
pub fn distill_confidences(
    net: &DkdNet,
    features: &FeatureTable,
    cohort: &Cohort,
    measure: ConfidenceMeasure,
) -> Result<ConfidenceTable> {
    let mut table = ConfidenceTable::new(net.heads);
    let mut q = vec![0.0; net.heads];
    for ep in cohort.episodes() {
        for t in 1..=ep.len as usize {
            let heads: Vec<DirichletParams> = net.forward(features.row(&ep.id, t)?)?;
            for (qk, d) in q.iter_mut().zip(&heads) {
                *qk = measure.of_dirichlet(*d);
            }
            table.insert(&ep.id, t, &q)?;
        }
    }
    Ok(table)
}
