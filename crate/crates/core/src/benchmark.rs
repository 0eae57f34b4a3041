//! The bundled synthetic benchmark: data, split, surrogate recipe and
//! budget grid, shared by the command line and the test suites.

use alloc::vec;
use alloc::vec::Vec;

use crate::cohort::Cohort;
use crate::confidence::ConfidenceMeasure;
use crate::dkd::{dkd_train, DkdConfig, DkdNet, DkdReport};
use crate::error::{Error, Result};
use crate::policy::Ick0Behavior;
use crate::scores::{ConfidenceTable, FeatureTable, ScoreMatrix};
use crate::synth::SynthConfig;
use crate::train::{distill_confidences, surrogate_rows, TrainConfig};
use crate::zoo::ModelZoo;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecipe {
    pub synth: SynthConfig,
    /// Every `train_every`-th episode (by position) is used for training.
    pub train_every: usize,
    pub dkd: DkdConfig,
    pub train: TrainConfig,
    pub budgets: Vec<f64>,
}

impl BenchmarkRecipe {
    pub fn new(seed: u64) -> Self {
        let synth = SynthConfig::benchmark(seed);
        let measure = ConfidenceMeasure::MaxProb;
        BenchmarkRecipe {
            train_every: 5,
            dkd: DkdConfig { hidden: 32, epochs: 60, measure, ..DkdConfig::default() },
            train: TrainConfig {
                measure,
                early_window: synth.early_window,
                ick0: Ick0Behavior::ResetToLevel1,
                ..TrainConfig::default()
            },
            budgets: vec![6.0, 12.0, 24.0, 48.0, 96.0, 192.0, 384.0],
            synth,
        }
    }
}

/// Splits a cohort into (train, test) by episode position.
pub fn split_every(cohort: &Cohort, every: usize) -> Result<(Cohort, Cohort)> {
    if every < 2 {
        return Err(Error::Usage("train split needs every >= 2 so both parts are non-empty".into()));
    }
    Ok(cohort.split(|i, _| i % every == 0))
}

/// Per-stage surrogates trained on `train`, and their confidences over
/// every timestep of `all`.
#[derive(Debug, Clone)]
pub struct Distilled {
    pub nets: Vec<DkdNet>,
    pub reports: Vec<DkdReport>,
    pub tables: Vec<Option<ConfidenceTable>>,
}

pub fn distill_stages(
    zoo: &ModelZoo,
    train: &Cohort,
    all: &Cohort,
    scores: &ScoreMatrix,
    features: &FeatureTable,
    early_window: u32,
    config: &DkdConfig,
) -> Result<Distilled> {
    let mut out = Distilled { nets: Vec::new(), reports: Vec::new(), tables: Vec::new() };
    for s in 0..zoo.stage_count() {
        let rows = surrogate_rows(zoo, train, scores, features, s, early_window)?;
        let (net, report) = dkd_train(&rows.data(), config)?;
        out.tables.push(Some(distill_confidences(&net, features, all, config.measure)?));
        out.nets.push(net);
        out.reports.push(report);
    }
    Ok(out)
}
