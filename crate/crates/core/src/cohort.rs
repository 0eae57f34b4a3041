//! Episodes with staged onsets, and their partition into one-stage datasets.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One monitored instance: a stream of `len` timesteps (`1..=len`) with an
/// optional onset time per stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub len: u32,
    onsets: Vec<Option<u32>>,
}

impl Episode {
    /// Validates onset bounds and the happens-before ordering between stages.
    pub fn new(id: impl Into<String>, len: u32, onsets: Vec<Option<u32>>) -> Result<Self> {
        let id = id.into();
        if len == 0 {
            return Err(Error::Validation(format!("episode {id}: length must be positive")));
        }
        for (s, onset) in onsets.iter().enumerate() {
            if let Some(t) = *onset {
                if t == 0 || t > len {
                    return Err(Error::Validation(format!(
                        "episode {id}: stage {} onset {t} outside [1, {len}]",
                        s + 1
                    )));
                }
            }
        }
        for s in 1..onsets.len() {
            match (onsets[s - 1], onsets[s]) {
                (None, Some(_)) => {
                    return Err(Error::Integrity(format!(
                        "episode {id}: happens-before violation, entered stage {} without stage {}",
                        s + 1,
                        s
                    )))
                }
                (Some(a), Some(b)) if a >= b => {
                    return Err(Error::Integrity(format!(
                        "episode {id}: happens-before violation, stage {} onset {b} is not after stage {} onset {a}",
                        s + 1,
                        s
                    )))
                }
                _ => {}
            }
        }
        Ok(Episode { id, len, onsets })
    }

    pub fn onset(&self, s: usize) -> Option<u32> {
        self.onsets.get(s).copied().flatten()
    }

    pub fn entered(&self, s: usize) -> bool {
        self.onset(s).is_some()
    }

    pub fn onsets(&self) -> &[Option<u32>] {
        &self.onsets
    }

    /// Number of stages entered; the episode's end-to-end class label.
    pub fn true_class(&self) -> usize {
        self.onsets.iter().take_while(|o| o.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    stages: usize,
    episodes: Vec<Episode>,
    index: BTreeMap<String, usize>,
}

impl Cohort {
    pub fn new(stages: usize, episodes: Vec<Episode>) -> Result<Self> {
        if stages == 0 {
            return Err(Error::Validation("cohort needs at least one stage".into()));
        }
        let mut index = BTreeMap::new();
        for (i, ep) in episodes.iter().enumerate() {
            if ep.onsets.len() != stages {
                return Err(Error::Validation(format!(
                    "episode {}: {} onset slots for {stages} stages",
                    ep.id,
                    ep.onsets.len()
                )));
            }
            if index.insert(ep.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate episode id {}", ep.id)));
            }
        }
        Ok(Cohort { stages, episodes, index })
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Episode> {
        self.index.get(id).map(|&i| &self.episodes[i])
    }

    pub fn timesteps(&self) -> u64 {
        self.episodes.iter().map(|e| u64::from(e.len)).sum()
    }

    /// Splits episodes into two cohorts by a predicate on the position.
    pub fn split(&self, mut first: impl FnMut(usize, &Episode) -> bool) -> (Cohort, Cohort) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, ep) in self.episodes.iter().enumerate() {
            if first(i, ep) {
                a.push(ep.clone());
            } else {
                b.push(ep.clone());
            }
        }
        (
            Cohort::new(self.stages, a).expect("subset of a valid cohort"),
            Cohort::new(self.stages, b).expect("subset of a valid cohort"),
        )
    }
}

/// One labelled timestep of a stage dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSample {
    /// Index into [`Cohort::episodes`].
    pub episode: usize,
    /// One-based timestep.
    pub t: u32,
    pub label: bool,
}

/// The contiguous slice an episode contributes to a stage dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSlice {
    pub episode: usize,
    pub start: u32,
    pub end: u32,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageDataset {
    /// Zero-based stage.
    pub stage: usize,
    pub early_window: u32,
    pub slices: Vec<StageSlice>,
    pub samples: Vec<StageSample>,
}

impl StageDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label).count()
    }
}

/// Builds the one-stage dataset for zero-based stage `s`.
///
/// Only episodes that entered the previous stage take part (stage 0 starts
/// at `t = 1`). Positive episodes contribute `[t^{s-1}, t^s]`, negatives
/// `[t^{s-1}, T]`, and a timestep is labelled 1 iff it lies in
/// `[t^s - early_window, t^s]`.
pub fn partition_stage_data(cohort: &Cohort, s: usize, early_window: u32) -> Result<StageDataset> {
    if s >= cohort.stages() {
        return Err(Error::Usage(format!("stage {} out of range 1..={}", s + 1, cohort.stages())));
    }
    let mut slices = Vec::new();
    let mut samples = Vec::new();
    for (i, ep) in cohort.episodes().iter().enumerate() {
        let start = if s == 0 {
            1
        } else {
            match ep.onset(s - 1) {
                Some(t) => t,
                None => continue,
            }
        };
        let (end, positive) = match ep.onset(s) {
            Some(onset) => {
                if s > 0 && start >= onset {
                    return Err(Error::Integrity(format!(
                        "episode {}: stage {} onset {start} is not before stage {} onset {onset}",
                        ep.id,
                        s,
                        s + 1
                    )));
                }
                (onset, true)
            }
            None => (ep.len, false),
        };
        slices.push(StageSlice { episode: i, start, end, positive });
        for t in start..=end {
            let label = positive && t + early_window >= end;
            samples.push(StageSample { episode: i, t, label });
        }
    }
    Ok(StageDataset { stage: s, early_window, slices, samples })
}
