//! Per-(episode, timestep) tables: teacher probabilities for every zoo model
//! and the feature vectors fed to the distillation surrogate.
//!
//! Timesteps are one-based here (`1..=T`), matching cohort onset times.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::zoo::ModelZoo;

#[derive(Debug, Clone)]
struct GridEpisode {
    id: String,
    len: usize,
    values: Vec<f64>,
}

// Absent cells are NaN on both sides, so compare bit patterns.
impl PartialEq for GridEpisode {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.len == other.len
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Dense per-episode rows of fixed width; NaN marks an absent cell.
#[derive(Debug, Clone, PartialEq)]
struct TimeGrid {
    width: usize,
    episodes: Vec<GridEpisode>,
    index: BTreeMap<String, usize>,
}

impl TimeGrid {
    fn new(width: usize) -> Self {
        TimeGrid { width, episodes: Vec::new(), index: BTreeMap::new() }
    }

    fn row_mut(&mut self, episode: &str, t: usize) -> &mut [f64] {
        let idx = match self.index.get(episode) {
            Some(&i) => i,
            None => {
                self.episodes.push(GridEpisode { id: episode.into(), len: 0, values: Vec::new() });
                self.index.insert(episode.into(), self.episodes.len() - 1);
                self.episodes.len() - 1
            }
        };
        let ep = &mut self.episodes[idx];
        if t > ep.len {
            ep.values.resize(t * self.width, f64::NAN);
            ep.len = t;
        }
        &mut ep.values[(t - 1) * self.width..t * self.width]
    }

    fn row(&self, ep: usize, t: usize) -> Option<&[f64]> {
        let ep = &self.episodes[ep];
        if t == 0 || t > ep.len {
            return None;
        }
        Some(&ep.values[(t - 1) * self.width..t * self.width])
    }

    fn cells(&self) -> usize {
        self.episodes.iter().map(|e| e.values.iter().filter(|v| !v.is_nan()).count()).sum()
    }
}

/// Teacher probability `p = Pr(y^s = 1 | x_t; m_sk)` for every model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    model_ids: Vec<String>,
    grid: TimeGrid,
}

/// Borrowed view of one episode's scores.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeScores<'a> {
    matrix: &'a ScoreMatrix,
    idx: usize,
}

impl ScoreMatrix {
    pub fn builder(zoo: &ModelZoo) -> ScoreMatrixBuilder {
        let model_ids: Vec<String> = zoo.models().map(|m| m.id.clone()).collect();
        let columns = model_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        ScoreMatrixBuilder { grid: TimeGrid::new(model_ids.len()), model_ids, columns }
    }

    pub fn model_count(&self) -> usize {
        self.model_ids.len()
    }

    /// Number of populated cells.
    pub fn len(&self) -> usize {
        self.grid.cells()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn column_of(&self, model_id: &str) -> Option<usize> {
        self.model_ids.iter().position(|m| m == model_id)
    }

    pub fn episode(&self, id: &str) -> Option<EpisodeScores<'_>> {
        self.grid.index.get(id).map(|&idx| EpisodeScores { matrix: self, idx })
    }

    /// Looks up one cell by names; fails outside the populated set.
    pub fn get(&self, episode: &str, t: usize, model_id: &str) -> Result<f64> {
        let col = self
            .model_ids
            .iter()
            .position(|m| m == model_id)
            .ok_or_else(|| Error::Usage(format!("unknown model id {model_id}")))?;
        self.episode(episode)
            .ok_or_else(|| Error::Coverage(format!("no scores for episode {episode}")))?
            .get(t, col)
    }

    /// Iterates `(episode_id, t, model_id, p)` over populated cells in
    /// episode-insertion, time, column order.
    pub fn cells(&self) -> impl Iterator<Item = (&str, usize, &str, f64)> + '_ {
        self.grid.episodes.iter().flat_map(move |ep| {
            (1..=ep.len).flat_map(move |t| {
                (0..self.model_ids.len()).filter_map(move |c| {
                    let v = ep.values[(t - 1) * self.model_ids.len() + c];
                    (!v.is_nan()).then(|| (ep.id.as_str(), t, self.model_ids[c].as_str(), v))
                })
            })
        })
    }

    /// Verifies that every timestep of every cohort episode has a score for
    /// every model (a query may reach any stage at any time). Lists at most
    /// the first 10 gaps.
    pub fn check_coverage(&self, cohort: &Cohort) -> Result<()> {
        let mut gaps = Vec::new();
        let mut total = 0usize;
        for ep in cohort.episodes() {
            let view = self.episode(&ep.id);
            for t in 1..=ep.len as usize {
                for (c, id) in self.model_ids.iter().enumerate() {
                    let ok = view.map(|v| v.get(t, c).is_ok()).unwrap_or(false);
                    if !ok {
                        total += 1;
                        if gaps.len() < 10 {
                            gaps.push(format!("({}, t={}, {})", ep.id, t - 1, id));
                        }
                    }
                }
            }
        }
        if total == 0 {
            Ok(())
        } else {
            Err(Error::Coverage(format!("{total} missing score cells; first gaps: {}", gaps.join(", "))))
        }
    }
}

impl<'a> EpisodeScores<'a> {
    pub fn id(&self) -> &'a str {
        &self.matrix.grid.episodes[self.idx].id
    }

    pub fn len(&self) -> usize {
        self.matrix.grid.episodes[self.idx].len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Probability of column `col` at one-based time `t`.
    pub fn get(&self, t: usize, col: usize) -> Result<f64> {
        match self.matrix.grid.row(self.idx, t).map(|r| r[col]) {
            Some(v) if !v.is_nan() => Ok(v),
            _ => Err(Error::Coverage(format!(
                "missing score for episode {} t={} model {}",
                self.id(),
                t.saturating_sub(1),
                self.matrix.model_ids[col]
            ))),
        }
    }
}

pub struct ScoreMatrixBuilder {
    model_ids: Vec<String>,
    columns: BTreeMap<String, usize>,
    grid: TimeGrid,
}

impl ScoreMatrixBuilder {
    /// Inserts one cell at one-based time `t`.
    pub fn insert(&mut self, episode: &str, t: usize, model_id: &str, p: f64) -> Result<()> {
        let col = *self
            .columns
            .get(model_id)
            .ok_or_else(|| Error::Validation(format!("model id {model_id} is not in the zoo")))?;
        self.insert_column(episode, t, col, p)
    }

    pub fn insert_column(&mut self, episode: &str, t: usize, col: usize, p: f64) -> Result<()> {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(Error::Range(format!("probability {p} outside [0,1]")));
        }
        if t == 0 {
            return Err(Error::Range("timestep must be one-based internally".into()));
        }
        let cell = &mut self.grid.row_mut(episode, t)[col];
        if !cell.is_nan() {
            return Err(Error::Validation(format!(
                "duplicate score for episode {episode} t={} model {}",
                t - 1,
                self.model_ids[col]
            )));
        }
        *cell = p;
        Ok(())
    }

    pub fn build(self) -> ScoreMatrix {
        ScoreMatrix { model_ids: self.model_ids, grid: self.grid }
    }
}

/// Per-(episode, timestep) feature vectors for the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    grid: TimeGrid,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        FeatureTable { grid: TimeGrid::new(dim) }
    }

    pub fn dim(&self) -> usize {
        self.grid.width
    }

    pub fn insert(&mut self, episode: &str, t: usize, values: &[f64]) -> Result<()> {
        if values.len() != self.dim() {
            return Err(Error::Usage(format!("feature row has {} values, expected {}", values.len(), self.dim())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range(format!("non-finite feature for episode {episode}")));
        }
        if t == 0 {
            return Err(Error::Range("timestep must be one-based internally".into()));
        }
        let row = self.grid.row_mut(episode, t);
        if !row[0].is_nan() {
            return Err(Error::Validation(format!("duplicate feature row for episode {episode} t={}", t - 1)));
        }
        row.copy_from_slice(values);
        Ok(())
    }

    pub fn row(&self, episode: &str, t: usize) -> Result<&[f64]> {
        let idx = *self
            .grid
            .index
            .get(episode)
            .ok_or_else(|| Error::Coverage(format!("no features for episode {episode}")))?;
        match self.grid.row(idx, t) {
            Some(r) if !r[0].is_nan() => Ok(r),
            _ => Err(Error::Coverage(format!("missing features for episode {episode} t={}", t.saturating_sub(1)))),
        }
    }

    /// Iterates `(episode_id, t, row)` over populated rows.
    pub fn rows(&self) -> impl Iterator<Item = (&str, usize, &[f64])> + '_ {
        self.grid.episodes.iter().flat_map(move |ep| {
            (1..=ep.len).filter_map(move |t| {
                let r = &ep.values[(t - 1) * self.grid.width..t * self.grid.width];
                (!r[0].is_nan()).then_some((ep.id.as_str(), t, r))
            })
        })
    }
}

/// Distilled confidences `q_hat` for every level of one stage, per
/// (episode, timestep).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTable {
    grid: TimeGrid,
}

impl ConfidenceTable {
    pub fn new(levels: usize) -> Self {
        ConfidenceTable { grid: TimeGrid::new(levels) }
    }

    pub fn levels(&self) -> usize {
        self.grid.width
    }

    pub fn insert(&mut self, episode: &str, t: usize, q: &[f64]) -> Result<()> {
        if q.len() != self.levels() || t == 0 {
            return Err(Error::Usage(format!("confidence row for {episode} has the wrong shape")));
        }
        self.grid.row_mut(episode, t).copy_from_slice(q);
        Ok(())
    }

    pub fn row(&self, episode: &str, t: usize) -> Result<&[f64]> {
        let missing = || Error::Coverage(format!("no distilled confidence for episode {episode} t={}", t.saturating_sub(1)));
        let idx = *self.grid.index.get(episode).ok_or_else(missing)?;
        match self.grid.row(idx, t) {
            Some(r) if !r[0].is_nan() => Ok(r),
            _ => Err(missing()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Cost;
    use crate::zoo::ModelSpec;
    use alloc::vec;

    fn zoo2() -> ModelZoo {
        let m = |id: &str, k: usize, c: f64| ModelSpec {
            id: id.into(),
            stage: 1,
            level: k,
            cost: Cost::from_units(c).unwrap(),
            val_auc: None,
        };
        ModelZoo::new(vec![m("m11", 1, 5.0), m("m12", 2, 7.0)], &[]).unwrap()
    }

    #[test]
    fn round_trip_single_cell() {
        let zoo = zoo2();
        let mut b = ScoreMatrix::builder(&zoo);
        b.insert("ep1", 1, "m11", 0.73).unwrap();
        let m = b.build();
        assert_eq!(m.get("ep1", 1, "m11").unwrap(), 0.73);
        assert!(matches!(m.get("ep1", 1, "m12"), Err(Error::Coverage(_))));
        assert!(matches!(m.get("ep1", 2, "m11"), Err(Error::Coverage(_))));
    }

    #[test]
    fn rejects_out_of_range() {
        let zoo = zoo2();
        let mut b = ScoreMatrix::builder(&zoo);
        assert!(matches!(b.insert("ep1", 1, "m11", 1.2), Err(Error::Range(_))));
        assert!(matches!(b.insert("ep1", 1, "zz", 0.2), Err(Error::Validation(_))));
    }

    #[test]
    fn counts_and_coverage() {
        use crate::cohort::{Cohort, Episode};
        let zoo = zoo2();
        let mut b = ScoreMatrix::builder(&zoo);
        for ep in ["a", "b"] {
            for t in 1..=3 {
                b.insert(ep, t, "m11", 0.1).unwrap();
                b.insert(ep, t, "m12", 0.2).unwrap();
            }
        }
        let m = b.build();
        assert_eq!(m.len(), 12);
        assert_eq!(m.cells().count(), 12);
        let cohort = Cohort::new(
            1,
            vec![Episode::new("a", 3, vec![None]).unwrap(), Episode::new("b", 3, vec![None]).unwrap()],
        )
        .unwrap();
        m.check_coverage(&cohort).unwrap();
        let longer = Cohort::new(1, vec![Episode::new("a", 4, vec![None]).unwrap()]).unwrap();
        let err = m.check_coverage(&longer).unwrap_err();
        assert!(matches!(err, Error::Coverage(ref s) if s.contains("2 missing")));
    }
}
