//! Seeded synthetic cohorts with binormal model scores of controlled AUC.
//!
//! Every model of stage `s` sees a latent
//! `x = d m_s(t) + sqrt(r) u_s(t) + sqrt(1 - r) e(t)`, where `m_s(t)` is 1 from `t^s - early_window`
//! onwards in episodes that enter stage `s`, `u_s` is noise shared by the
//! stage's models, `e` is the model's own noise (both unit-variance AR(1)),
//! and `d = sqrt(2) Phi^-1(AUC)`. Information is nested: with `r_top` the
//! shared share of the stage's best model, a model with separation `d` gets
//! `r = r_top (d / d_top)^2`, i.e. it sees the best model's latent plus
//! extra independent noise. Scores are the equal-prior posterior
//! `p = sigmoid(d x - d^2 / 2 + prior_shift)`. Features mix all latents
//! linearly and add Gaussian noise.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cohort::{partition_stage_data, Cohort, Episode};
use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::math;
use crate::metrics::binary_auc;
use crate::scores::{FeatureTable, ScoreMatrix};
use crate::zoo::{ModelSpec, ModelZoo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub id: String,
    pub cost: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthStage {
    /// Probability of entering this stage given the previous one.
    pub onset_rate: f64,
    pub dkd_cost: f64,
    pub models: Vec<SynthModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub episodes: usize,
    pub min_len: u32,
    pub max_len: u32,
    pub stages: Vec<SynthStage>,
    pub early_window: u32,
    pub feature_dim: usize,
    pub feature_noise: f64,
    /// Share of the best model's latent variance common to its stage.
    pub shared_noise: f64,
    /// AR(1) coefficient of the latent noise over time.
    pub autocorrelation: f64,
    /// Log-odds added to every score.
    pub prior_shift: f64,
    pub auc_tolerance: f64,
    pub max_retries: usize,
}

impl SynthConfig {
    /// Two stages, six models spanning costs 5..268.
    pub fn benchmark(seed: u64) -> Self {
        let stage = |rate: f64, models: [(&str, f64, f64); 3]| SynthStage {
            onset_rate: rate,
            dkd_cost: 1.0,
            models: models
                .iter()
                .map(|&(id, cost, auc)| SynthModel { id: id.into(), cost, auc })
                .collect(),
        };
        SynthConfig {
            seed,
            episodes: 5000,
            min_len: 24,
            max_len: 48,
            stages: vec![
                stage(0.4, [("m11", 5.0, 0.76), ("m12", 86.0, 0.82), ("m13", 258.0, 0.85)]),
                stage(0.5, [("m21", 7.0, 0.88), ("m22", 172.0, 0.90), ("m23", 268.0, 0.93)]),
            ],
            early_window: 12,
            feature_dim: 8,
            feature_noise: 0.1,
            shared_noise: 0.95,
            autocorrelation: 0.95,
            prior_shift: 0.0,
            auc_tolerance: 0.02,
            max_retries: 8,
        }
    }

    pub fn model_count(&self) -> usize {
        self.stages.iter().map(|s| s.models.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Usage(m));
        if self.stages.is_empty() || self.stages.iter().any(|s| s.models.is_empty()) {
            return bad("every stage needs at least one model".into());
        }
        if self.episodes == 0 || self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!("need episodes >= 1 and 1 <= min_len <= max_len, got {}..{}", self.min_len, self.max_len));
        }
        for s in &self.stages {
            if !(s.onset_rate > 0.0 && s.onset_rate < 1.0) {
                return bad(format!("onset rates must lie in (0, 1), got {}", s.onset_rate));
            }
            for m in &s.models {
                if !(m.auc >= 0.5 && m.auc < 1.0) {
                    return bad(format!("target AUC of {} must lie in [0.5, 1), got {}", m.id, m.auc));
                }
            }
        }
        if self.feature_dim == 0 {
            return bad("feature dimension must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.shared_noise) || !(0.0..1.0).contains(&self.autocorrelation) {
            return bad("shared noise and autocorrelation must lie in [0, 1)".into());
        }
        if !(self.feature_noise >= 0.0 && self.auc_tolerance > 0.0) {
            return bad("feature noise must be >= 0 and the AUC tolerance > 0".into());
        }
        Ok(())
    }

    pub fn zoo(&self) -> Result<ModelZoo> {
        let mut models = Vec::new();
        let mut dkd = Vec::new();
        for (s, stage) in self.stages.iter().enumerate() {
            for (k, m) in stage.models.iter().enumerate() {
                models.push(ModelSpec {
                    id: m.id.clone(),
                    stage: s + 1,
                    level: k + 1,
                    cost: Cost::from_units(m.cost)?,
                    val_auc: Some(m.auc),
                });
            }
            dkd.push((s + 1, Cost::from_units(stage.dkd_cost)?));
        }
        ModelZoo::new(models, &dkd)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub zoo: ModelZoo,
    pub cohort: Cohort,
    pub scores: ScoreMatrix,
    pub features: FeatureTable,
    /// Empirical per-model AUC on its stage dataset.
    pub empirical_auc: Vec<Vec<f64>>,
    pub attempts: usize,
}

/// SplitMix64 finaliser used to derive independent sub-seeds.
pub fn derive_seed(root: u64, tag: u64) -> u64 {
    let mut z = root ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates a cohort, scores and features; retries with derived seeds
/// until every model's empirical AUC is within tolerance of its target.
pub fn gen_synthetic(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let zoo = config.zoo()?;
    let mut worst = String::new();
    for attempt in 0..=config.max_retries {
        let seed = derive_seed(config.seed, attempt as u64);
        let (cohort, scores, features) = generate(config, &zoo, seed)?;
        let empirical = empirical_aucs(config, &zoo, &cohort, &scores)?;
        let mut ok = true;
        for (s, stage) in config.stages.iter().enumerate() {
            for (k, m) in stage.models.iter().enumerate() {
                let gap = (empirical[s][k] - m.auc).abs();
                if gap > config.auc_tolerance {
                    ok = false;
                    worst = format!("{} reached AUC {:.4} for target {:.4}", m.id, empirical[s][k], m.auc);
                }
            }
        }
        if ok {
            return Ok(SynthOutput { zoo, cohort, scores, features, empirical_auc: empirical, attempts: attempt + 1 });
        }
    }
    Err(Error::Validation(format!(
        "synthetic AUC targets unattainable after {} attempts: {worst}",
        config.max_retries + 1
    )))
}

fn empirical_aucs(config: &SynthConfig, zoo: &ModelZoo, cohort: &Cohort, scores: &ScoreMatrix) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for s in 0..zoo.stage_count() {
        let data = partition_stage_data(cohort, s, config.early_window)?;
        let labels: Vec<bool> = data.samples.iter().map(|x| x.label).collect();
        let mut per = Vec::new();
        for m in zoo.stage(s) {
            let col = scores.column_of(&m.id).expect("generated column");
            let ps = data
                .samples
                .iter()
                .map(|x| scores.episode(&cohort.episodes()[x.episode].id).expect("generated episode").get(x.t as usize, col))
                .collect::<Result<Vec<f64>>>()?;
            let auc = binary_auc(&ps, &labels).ok_or_else(|| {
                Error::Validation(format!("stage {} dataset lacks one class; increase episodes or onset rates", s + 1))
            })?;
            per.push(auc);
        }
        out.push(per);
    }
    Ok(out)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn generate(config: &SynthConfig, zoo: &ModelZoo, seed: u64) -> Result<(Cohort, ScoreMatrix, FeatureTable)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stages = config.stages.len();
    let total_models = config.model_count();
    let mixing: Vec<f64> = (0..config.feature_dim * total_models)
        .map(|_| normal(&mut rng) / math::sqrt(total_models as f64))
        .collect();
    let separation: Vec<Vec<f64>> = config
        .stages
        .iter()
        .map(|s| s.models.iter().map(|m| math::sqrt(2.0) * math::normal_quantile(m.auc)).collect())
        .collect();
    let phi = config.autocorrelation;
    let innovation = math::sqrt(1.0 - phi * phi);
    let mix: Vec<Vec<(f64, f64)>> = separation
        .iter()
        .map(|ds| {
            let top = ds.iter().cloned().fold(0.0, f64::max);
            ds.iter()
                .map(|d| {
                    let r = if top > 0.0 { config.shared_noise * (d / top) * (d / top) } else { 0.0 };
                    (math::sqrt(r), math::sqrt(1.0 - r))
                })
                .collect()
        })
        .collect();

    let mut episodes = Vec::with_capacity(config.episodes);
    let mut builder = ScoreMatrix::builder(zoo);
    let mut features = FeatureTable::new(config.feature_dim);
    let width = config.episodes.to_string().len();
    for i in 0..config.episodes {
        let id = format!("ep{:0width$}", i + 1);
        let len = rng.random_range(config.min_len..=config.max_len);
        let mut onsets: Vec<Option<u32>> = vec![None; stages];
        let mut prev: Option<u32> = None;
        for s in 0..stages {
            let (lo, hi) = match prev {
                None if s == 0 => ((len / 4).max(2).min(len), (3 * len).div_ceil(4).max(2).min(len)),
                None => break,
                Some(p) if p < len => (p + 1, len),
                Some(_) => break,
            };
            if lo > hi || !rng.random_bool(config.stages[s].onset_rate) {
                break;
            }
            let t = rng.random_range(lo..=hi);
            onsets[s] = Some(t);
            prev = Some(t);
        }
        let mut shared_state = vec![0.0; stages];
        let mut own_state = vec![0.0; total_models];
        let mut latent = vec![0.0; total_models];
        let mut frow = vec![0.0; config.feature_dim];
        for t in 1..=len {
            let mut col = 0;
            for s in 0..stages {
                let z = normal(&mut rng);
                shared_state[s] = if t == 1 { z } else { phi * shared_state[s] + innovation * z };
                let signal = match onsets[s] {
                    Some(o) if t + config.early_window >= o => 1.0,
                    _ => 0.0,
                };
                for (k, d) in separation[s].iter().enumerate() {
                    let z = normal(&mut rng);
                    own_state[col] = if t == 1 { z } else { phi * own_state[col] + innovation * z };
                    let (shared, own) = mix[s][k];
                    let x = d * signal + shared * shared_state[s] + own * own_state[col];
                    latent[col] = x;
                    let p = math::sigmoid(d * x - d * d / 2.0 + config.prior_shift);
                    builder.insert_column(&id, t as usize, zoo.column(s, k), p)?;
                    col += 1;
                }
            }
            for (j, f) in frow.iter_mut().enumerate() {
                let row = &mixing[j * total_models..(j + 1) * total_models];
                *f = row.iter().zip(&latent).map(|(w, x)| w * x).sum::<f64>()
                    + config.feature_noise * normal(&mut rng);
            }
            features.insert(&id, t as usize, &frow)?;
        }
        episodes.push(Episode::new(id, len, onsets)?);
    }
    Ok((Cohort::new(stages, episodes)?, builder.build(), features))
}
