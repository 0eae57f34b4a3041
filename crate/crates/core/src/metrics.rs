//! End-to-end evaluation: episode class scores, one-vs-one AUC, earliness,
//! cost per call and the convex hull of a tradeoff cloud.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::cost::Cost;
use crate::engine::{Action, CohortRun, TraceRecord};
use crate::error::{Error, Result};

/// Per-episode scores over `stages + 1` classes: class 0 ("never entered")
/// is the max of `1 - p` over stage-1 records, class `s` the max of `p`
/// over stage-`s` records (0 when never reached); normalised to sum 1.
/// Upgrade hops are skipped: the model they deferred to answers instead.
pub fn episode_class_scores(records: &[TraceRecord], stages: usize) -> Vec<f64> {
    let mut v = vec![0.0; stages + 1];
    for r in records.iter().filter(|r| r.action != Action::Upgrade) {
        if r.stage == 0 {
            v[0] = f64::max(v[0], 1.0 - r.p);
        }
        v[r.stage + 1] = f64::max(v[r.stage + 1], r.p);
    }
    normalise(v)
}

/// Scales a non-negative vector to sum 1 (uniform when it sums to 0).
pub fn normalise(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    let n = v.len() as f64;
    for x in v.iter_mut() {
        *x = if total > 0.0 { *x / total } else { 1.0 / n };
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvoAuc {
    pub auc: f64,
    /// `(i, j, auc)` for every evaluated class pair.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Pairs skipped because a class has no episodes.
    pub skipped: Vec<(usize, usize)>,
}

/// Binary AUC with ties counted one half (rank-sum form).
pub fn binary_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks of positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&x| labels[x]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Unweighted mean over class pairs `i < j` of the binary AUC separating
/// class `j` (positive) from class `i` using the class-`j` score, over the
/// episodes of those two classes.
pub fn ovo_auc(scores: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<OvoAuc> {
    if scores.len() != labels.len() {
        return Err(Error::Usage("class scores and labels differ in length".into()));
    }
    if scores.iter().any(|v| v.len() != classes) || labels.iter().any(|&l| l >= classes) {
        return Err(Error::Usage(format!("class scores and labels must cover exactly {classes} classes")));
    }
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for i in 0..classes {
        for j in i + 1..classes {
            let mut s = Vec::new();
            let mut y = Vec::new();
            for (v, &l) in scores.iter().zip(labels) {
                if l == i || l == j {
                    s.push(v[j]);
                    y.push(l == j);
                }
            }
            match binary_auc(&s, &y) {
                Some(a) => pairs.push((i, j, a)),
                None => skipped.push((i, j)),
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Validation(format!("no class pair has both classes present ({classes} classes)")));
    }
    let auc = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
    Ok(OvoAuc { auc, pairs, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Earliness {
    /// Mean `t^S - t_detect` over detected last-stage positives.
    pub mean: Option<f64>,
    pub detected: usize,
    pub undetected: usize,
}

/// Earliness of last-stage detections against true last-stage onsets.
pub fn early_hours(run: &CohortRun, cohort: &Cohort) -> Earliness {
    let last = cohort.stages() - 1;
    let mut sum = 0.0;
    let mut detected = 0;
    let mut undetected = 0;
    for (r, ep) in run.runs.iter().zip(cohort.episodes()) {
        let Some(onset) = ep.onset(last) else { continue };
        match r.detected_at {
            Some(t) => {
                sum += onset as f64 - t as f64;
                detected += 1;
            }
            None => undetected += 1,
        }
    }
    Earliness { mean: (detected > 0).then(|| sum / detected as f64), detected, undetected }
}

/// Ledger total divided by processed timesteps.
pub fn avg_cost_per_call(total: Cost, timesteps: u64) -> Result<f64> {
    if timesteps == 0 {
        return Err(Error::Validation("no timesteps were processed".into()));
    }
    Ok(total.per(timesteps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub auc: f64,
    pub cost_per_call: f64,
    pub total_cost: f64,
    pub timesteps: u64,
    pub earliness: Earliness,
    pub skipped_pairs: Vec<(usize, usize)>,
    /// Episodes per true class.
    pub class_counts: Vec<usize>,
}

/// End-to-end metrics of one cohort run.
pub fn evaluate(run: &CohortRun, cohort: &Cohort) -> Result<Evaluation> {
    let stages = cohort.stages();
    let scores: Vec<Vec<f64>> = run.runs.iter().map(|r| episode_class_scores(&r.records, stages)).collect();
    let labels: Vec<usize> = cohort.episodes().iter().map(|e| e.true_class()).collect();
    let ovo = ovo_auc(&scores, &labels, stages + 1)?;
    let mut class_counts = vec![0; stages + 1];
    for &l in &labels {
        class_counts[l] += 1;
    }
    let timesteps = run.timesteps();
    Ok(Evaluation {
        auc: ovo.auc,
        cost_per_call: avg_cost_per_call(run.ledger.total(), timesteps)?,
        total_cost: run.ledger.total().units(),
        timesteps,
        earliness: early_hours(run, cohort),
        skipped_pairs: ovo.skipped,
        class_counts,
    })
}

/// Monotone-chain convex hull, counter-clockwise without repeated or
/// collinear vertices.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: alloc::boxed::Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { alloc::boxed::Box::new(pts.iter()) } else { alloc::boxed::Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Shoelace area of the convex hull; 0 for fewer than three non-collinear points.
pub fn convex_hull_area(points: &[(f64, f64)]) -> f64 {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..hull.len() {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        twice += a.0 * b.1 - b.0 * a.1;
    }
    (twice / 2.0).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub budget: f64,
    pub cost: f64,
    pub auc: f64,
    /// Where the point's policy was written, if anywhere.
    pub policy: Option<String>,
}

/// Hull area in (cost, AUC x 100) units.
pub fn tradeoff_hull_area(points: &[TradeoffPoint]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.cost, p.auc * 100.0)).collect();
    convex_hull_area(&pts)
}

/// Recommended point: among Pareto-optimal points (no other point is at
/// least as cheap and at least as accurate, and strictly better in one),
/// the one maximising min-max normalised AUC minus normalised cost; ties
/// go to the cheaper point.
pub fn recommend(points: &[TradeoffPoint]) -> Option<usize> {
    if points.is_empty() {
        return None;
    }
    let span = |f: &dyn Fn(&TradeoffPoint) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (c0, cw) = span(&|p| p.cost);
    let (a0, aw) = span(&|p| p.auc);
    let dominated = |i: usize| {
        points.iter().enumerate().any(|(j, q)| {
            j != i
                && q.cost <= points[i].cost
                && q.auc >= points[i].auc
                && (q.cost < points[i].cost || q.auc > points[i].auc)
        })
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        if dominated(i) {
            continue;
        }
        let score = (p.auc - a0) / aw - (p.cost - c0) / cw;
        let better = match best {
            None => true,
            Some((b, s)) => score > s || (score == s && p.cost < points[b].cost),
        };
        if better {
            best = Some((i, score));
        }
    }
    best.map(|b| b.0)
}
