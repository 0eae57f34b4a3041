//! Two-dimensional propagation of streaming queries through the cascade:
//! IDK upgrades within a timestep, ICK1 stage transitions, ICK0 outcomes,
//! with an exact cost ledger.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Episode};
use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::policy::{GateOrder, GatePolicy, Ick0Behavior, StageGate, TransitionTiming};
use crate::scores::{ConfidenceTable, EpisodeScores, ScoreMatrix};
use crate::zoo::ModelZoo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Stay,
    Upgrade,
    Transition,
    Ick0,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::Upgrade => "upgrade",
            Action::Transition => "transition",
            Action::Ick0 => "ick0",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Action {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Action::Stay, Action::Upgrade, Action::Transition, Action::Ick0]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown trace action {s:?}")))
    }
}

/// One evaluated model at one timestep. Stage and level are zero-based,
/// `t` one-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: u32,
    pub stage: usize,
    pub level: usize,
    pub p: f64,
    pub q: f64,
    pub action: Action,
    /// Cost charged for this hop, including a surrogate call when it is the
    /// first evaluation of its stage at this timestep.
    pub cost: Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Feed every timestep until `T` or a last-stage positive.
    #[default]
    Streaming,
    /// A single query at the first timestep, resolved to a terminal outcome.
    OneShot,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Streaming => "streaming",
            RunMode::OneShot => "one-shot",
        })
    }
}

impl core::str::FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "streaming" => Ok(RunMode::Streaming),
            "one-shot" => Ok(RunMode::OneShot),
            _ => Err(Error::Usage(format!("unknown run mode {s:?}"))),
        }
    }
}

/// Call counts and exact cost totals.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CostLedger {
    /// Calls per zoo column.
    pub model_calls: Vec<u64>,
    /// Surrogate calls per stage.
    pub dkd_calls: Vec<u64>,
    pub model_cost: Cost,
    pub dkd_cost: Cost,
}

impl CostLedger {
    pub fn new(zoo: &ModelZoo) -> Self {
        CostLedger {
            model_calls: vec![0; zoo.model_count()],
            dkd_calls: vec![0; zoo.stage_count()],
            model_cost: Cost::ZERO,
            dkd_cost: Cost::ZERO,
        }
    }

    pub fn total(&self) -> Cost {
        self.model_cost + self.dkd_cost
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for (a, b) in self.model_calls.iter_mut().zip(&other.model_calls) {
            *a += b;
        }
        for (a, b) in self.dkd_calls.iter_mut().zip(&other.dkd_calls) {
            *a += b;
        }
        self.model_cost += other.model_cost;
        self.dkd_cost += other.dkd_cost;
    }

    /// `sum count(model) cost(model) + sum count(dkd) dkd_cost`.
    pub fn recompute(&self, zoo: &ModelZoo) -> Cost {
        let models: Cost = zoo.models().zip(&self.model_calls).map(|(m, &n)| m.cost * n).sum();
        let dkd: Cost = (0..zoo.stage_count()).map(|s| zoo.dkd_cost(s) * self.dkd_calls[s]).sum();
        models + dkd
    }
}

/// Where a query currently sits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryState {
    pub stage: usize,
    pub level: usize,
    pub alive: bool,
    /// First ICK1 time per stage.
    pub first_ick1: Vec<Option<u32>>,
}

impl QueryState {
    pub fn new(stages: usize) -> Self {
        QueryState { stage: 0, level: 0, alive: true, first_ick1: vec![None; stages] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub episode: String,
    pub records: Vec<TraceRecord>,
    pub ledger: CostLedger,
    /// Distinct timesteps processed.
    pub timesteps: u32,
    /// Time of the last-stage positive, if any.
    pub detected_at: Option<u32>,
    pub first_ick1: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CohortRun {
    pub runs: Vec<EpisodeRun>,
    pub ledger: CostLedger,
}

impl CohortRun {
    pub fn timesteps(&self) -> u64 {
        self.runs.iter().map(|r| r.timesteps as u64).sum()
    }
}

/// Evaluates a policy against precomputed scores (and, for soft stages,
/// distilled confidences).
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    zoo: &'a ModelZoo,
    policy: &'a GatePolicy,
    scores: &'a ScoreMatrix,
    confidences: Vec<Option<&'a ConfidenceTable>>,
    columns: Vec<Vec<usize>>,
}

impl<'a> Engine<'a> {
    /// `confidences[s]` must be present for every soft-gated stage.
    pub fn new(
        zoo: &'a ModelZoo,
        policy: &'a GatePolicy,
        scores: &'a ScoreMatrix,
        confidences: &'a [Option<ConfidenceTable>],
    ) -> Result<Self> {
        policy.validate(zoo)?;
        let mut columns = Vec::with_capacity(zoo.stage_count());
        for s in 0..zoo.stage_count() {
            let cols = zoo
                .stage(s)
                .iter()
                .map(|m| {
                    scores
                        .column_of(&m.id)
                        .ok_or_else(|| Error::Validation(format!("score table has no column for model {}", m.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            columns.push(cols);
        }
        let mut conf = Vec::with_capacity(zoo.stage_count());
        for s in 0..zoo.stage_count() {
            let table = confidences.get(s).and_then(|c| c.as_ref());
            if policy.needs_surrogate(s) {
                match table {
                    Some(t) if t.levels() == zoo.levels(s) => {}
                    _ => {
                        return Err(Error::Usage(format!(
                            "stage {} is soft-gated but has no distilled confidences for its {} levels",
                            s + 1,
                            zoo.levels(s)
                        )))
                    }
                }
            }
            conf.push(table);
        }
        Ok(Engine { zoo, policy, scores, confidences: conf, columns })
    }

    pub fn zoo(&self) -> &ModelZoo {
        self.zoo
    }

    /// Processes timestep `t` for a live query, appending one record per
    /// evaluated model.
    pub fn step(
        &self,
        state: &mut QueryState,
        episode: &EpisodeScores<'_>,
        t: u32,
        mode: RunMode,
        ledger: &mut CostLedger,
        out: &mut Vec<TraceRecord>,
    ) -> Result<()> {
        let last = self.zoo.stage_count() - 1;
        let same_step = mode == RunMode::OneShot || self.policy.timing == TransitionTiming::SameStep;
        let ick0 = if mode == RunMode::OneShot { Ick0Behavior::Terminal } else { self.policy.ick0 };
        let mut weights: Option<(usize, Vec<f64>, Vec<f64>)> = None;
        loop {
            let s = state.stage;
            let k = state.level;
            let stage = &self.policy.stages[s];
            let mut cost = Cost::ZERO;
            if let StageGate::Soft(params) = &stage.gate {
                if weights.as_ref().map_or(true, |w| w.0 != s) {
                    let table = self.confidences[s].expect("checked in Engine::new");
                    let q_hat = table.row(episode.id(), t as usize)?.to_vec();
                    let w = params.weights(&q_hat);
                    weights = Some((s, q_hat, w));
                    let c = self.zoo.dkd_cost(s);
                    cost += c;
                    ledger.dkd_cost += c;
                    ledger.dkd_calls[s] += 1;
                }
            }
            let col = self.columns[s][k];
            let p = episode.get(t as usize, col)?;
            let c = self.zoo.cost(s, k);
            cost += c;
            ledger.model_cost += c;
            ledger.model_calls[self.zoo.column(s, k)] += 1;
            let q = match &weights {
                Some((ws, q_hat, _)) if *ws == s => q_hat[k],
                _ => self.policy.measure.of_prob(p, self.policy.beta),
            };
            let mut record = TraceRecord { t, stage: s, level: k, p, q, action: Action::Stay, cost };

            let next = match &stage.gate {
                StageGate::Hard(h) => {
                    (k < h.cutoffs.len() && k + 1 < self.zoo.levels(s) && q < h.cutoffs[k]).then_some(k + 1)
                }
                StageGate::Soft(_) => {
                    let w = &weights.as_ref().expect("soft stage weights").2;
                    let mut best: Option<usize> = None;
                    for j in k + 1..w.len() {
                        if best.map_or(true, |b| w[j] > w[b]) {
                            best = Some(j);
                        }
                    }
                    best.filter(|&j| w[j] > w[k])
                }
            };
            let ick1 = p >= stage.thresholds[k];
            let upgrade = match self.policy.order {
                GateOrder::IdkFirst => next,
                GateOrder::Ick1First => next.filter(|_| !ick1),
            };
            if let Some(j) = upgrade {
                record.action = Action::Upgrade;
                out.push(record);
                state.level = j;
                continue;
            }

            if ick1 {
                record.action = Action::Transition;
                out.push(record);
                state.first_ick1[s].get_or_insert(t);
                if s == last {
                    state.alive = false;
                    return Ok(());
                }
                state.stage += 1;
                state.level = 0;
                if same_step {
                    continue;
                }
                return Ok(());
            }

            match ick0 {
                Ick0Behavior::Stay => record.action = Action::Stay,
                Ick0Behavior::ResetToLevel1 => {
                    record.action = Action::Ick0;
                    state.level = 0;
                }
                Ick0Behavior::Terminal => {
                    record.action = Action::Ick0;
                    state.alive = false;
                }
            }
            out.push(record);
            return Ok(());
        }
    }

    pub fn run_episode(&self, episode: &Episode, mode: RunMode) -> Result<EpisodeRun> {
        let scores = self
            .scores
            .episode(&episode.id)
            .ok_or_else(|| Error::Coverage(format!("no scores for episode {}", episode.id)))?;
        let mut state = QueryState::new(self.zoo.stage_count());
        let mut ledger = CostLedger::new(self.zoo);
        let mut records = Vec::new();
        let horizon = match mode {
            RunMode::Streaming => episode.len,
            RunMode::OneShot => 1,
        };
        let mut timesteps = 0;
        let mut detected_at = None;
        for t in 1..=horizon {
            if !state.alive {
                break;
            }
            timesteps += 1;
            self.step(&mut state, &scores, t, mode, &mut ledger, &mut records)
                .map_err(|e| e.context(&format!("episode {} t={}", episode.id, t - 1)))?;
            if !state.alive && detected_at.is_none() {
                detected_at = state.first_ick1[self.zoo.stage_count() - 1];
            }
        }
        Ok(EpisodeRun {
            episode: episode.id.clone(),
            records,
            ledger,
            timesteps,
            detected_at,
            first_ick1: state.first_ick1,
        })
    }

    /// Runs every episode independently and merges ledgers in cohort order.
    pub fn run_cohort(&self, cohort: &Cohort, mode: RunMode) -> Result<CohortRun> {
        let mut ledger = CostLedger::new(self.zoo);
        let mut runs = Vec::with_capacity(cohort.len());
        for ep in cohort.episodes() {
            let run = self.run_episode(ep, mode)?;
            ledger.merge(&run.ledger);
            runs.push(run);
        }
        Ok(CohortRun { runs, ledger })
    }
}
