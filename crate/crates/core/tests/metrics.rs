use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unfold_core::cohort::{Cohort, Episode};
use unfold_core::cost::Cost;
use unfold_core::engine::{Action, CohortRun, CostLedger, EpisodeRun, TraceRecord};
use unfold_core::metrics::{
    avg_cost_per_call, convex_hull_area, early_hours, episode_class_scores, ovo_auc, recommend,
    tradeoff_hull_area, TradeoffPoint,
};

fn rec(stage: usize, p: f64, action: Action) -> TraceRecord {
    TraceRecord { t: 1, stage, level: 0, p, q: 0.0, action, cost: Cost::ZERO }
}

fn close(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
    }
}

#[test]
fn class_scores_examples() {
    let quiet = vec![rec(0, 0.0, Action::Stay); 4];
    close(&episode_class_scores(&quiet, 2), &[1.0, 0.0, 0.0]);

    let r = vec![rec(0, 0.8, Action::Stay), rec(0, 0.9, Action::Transition), rec(1, 0.6, Action::Stay)];
    close(&episode_class_scores(&r, 2), &[2.0 / 17.0, 9.0 / 17.0, 6.0 / 17.0]);
}

#[test]
fn class_scores_three_episode_fixture() {
    // worked by hand: (max 1-p over stage 1, max p stage 1, max p stage 2), then / sum
    let a = vec![rec(0, 0.3, Action::Stay), rec(0, 0.1, Action::Stay)];
    let b = vec![rec(0, 0.4, Action::Stay), rec(0, 0.7, Action::Transition), rec(1, 0.2, Action::Stay), rec(1, 0.5, Action::Stay)];
    let c = vec![rec(0, 0.5, Action::Upgrade), rec(0, 0.6, Action::Transition), rec(1, 0.9, Action::Transition)];
    close(&episode_class_scores(&a, 2), &[0.9 / 1.2, 0.3 / 1.2, 0.0]);
    close(&episode_class_scores(&b, 2), &[0.6 / 1.8, 0.7 / 1.8, 0.5 / 1.8]);
    // the deferred (upgrade) hop does not count
    close(&episode_class_scores(&c, 2), &[0.4 / 1.9, 0.6 / 1.9, 0.9 / 1.9]);
    // no records at all
    close(&episode_class_scores(&[], 2), &[1.0 / 3.0; 3]);
}

/// Pairwise concordance over every (positive, negative) episode pair.
fn brute_ovo(scores: &[Vec<f64>], labels: &[usize], classes: usize) -> Option<f64> {
    let mut aucs = Vec::new();
    for i in 0..classes {
        for j in i + 1..classes {
            let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == j).map(|(v, _)| v[j]).collect();
            let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == i).map(|(v, _)| v[j]).collect();
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let mut wins = 0.0;
            for p in &pos {
                for n in &neg {
                    wins += if p > n {
                        1.0
                    } else if p == n {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
            aucs.push(wins / (pos.len() * neg.len()) as f64);
        }
    }
    (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
}

fn random_fixture(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>, usize) {
    let classes = rng.random_range(2..=4);
    let n = rng.random_range(2..=14);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        // coarse grid so ties are common
        scores.push((0..classes).map(|_| rng.random_range(0..6) as f64 / 5.0).collect());
        labels.push(rng.random_range(0..classes));
    }
    (scores, labels, classes)
}

#[test]
fn ovo_matches_brute_force_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 100 {
        let (s, l, c) = random_fixture(&mut rng);
        match (ovo_auc(&s, &l, c), brute_ovo(&s, &l, c)) {
            (Ok(got), Some(want)) => {
                assert!((got.auc - want).abs() < 1e-12, "{} vs {want}", got.auc);
                checked += 1;
            }
            (Err(_), None) => {}
            (got, want) => panic!("disagreement: {got:?} vs {want:?}"),
        }
    }
}

#[test]
fn ovo_extremes_and_skips() {
    let s = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]];
    assert_eq!(ovo_auc(&s, &[0, 1, 2], 3).unwrap().auc, 1.0);
    let same = vec![vec![1.0 / 3.0; 3]; 6];
    let r = ovo_auc(&same, &[0, 1, 2, 0, 1, 2], 3).unwrap();
    assert!(r.pairs.iter().all(|p| p.2 == 0.5));
    let r = ovo_auc(&s[..2], &[0, 1], 3).unwrap();
    assert_eq!(r.pairs.len(), 1);
    assert_eq!(r.skipped, vec![(0, 2), (1, 2)]);
    assert!(ovo_auc(&s[..1], &[0], 3).is_err());
}

#[test]
fn ovo_ten_episode_three_class_fixture() {
    let s: Vec<Vec<f64>> = vec![
        vec![0.6, 0.3, 0.1],
        vec![0.5, 0.4, 0.1],
        vec![0.7, 0.2, 0.1],
        vec![0.3, 0.5, 0.2],
        vec![0.4, 0.4, 0.2],
        vec![0.2, 0.3, 0.5],
        vec![0.1, 0.6, 0.3],
        vec![0.2, 0.2, 0.6],
        vec![0.5, 0.3, 0.2],
        vec![0.3, 0.3, 0.4],
    ];
    let l = vec![0, 0, 0, 1, 1, 2, 2, 2, 1, 2];
    // (0,1): pos class-1 scores {0.5,0.4,0.3} vs neg {0.3,0.4,0.2} -> 3+3+2.5... counted by hand:
    // 0.5 beats all 3 = 3; 0.4 beats 0.3,0.2 ties 0.4 = 2.5; 0.3 beats 0.2 ties 0.3 = 1.5 -> 7/9
    // (0,2): pos class-2 {0.5,0.3,0.6,0.4} vs neg {0.1,0.1,0.1} -> 1
    // (1,2): pos class-2 {0.5,0.3,0.6,0.4} vs neg {0.2,0.2,0.2} -> 1
    let want = (7.0 / 9.0 + 1.0 + 1.0) / 3.0;
    assert!((ovo_auc(&s, &l, 3).unwrap().auc - want).abs() < 1e-12);
    assert!((brute_ovo(&s, &l, 3).unwrap() - want).abs() < 1e-12);
}

proptest! {
    #[test]
    fn ovo_invariant_under_monotone_transforms(seed in any::<u64>(), k in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, l, c) = random_fixture(&mut rng);
        if let Ok(base) = ovo_auc(&s, &l, c) {
            let t: Vec<Vec<f64>> = s.iter().map(|v| v.iter().map(|x| (k * x).exp() - 3.0).collect()).collect();
            let moved = ovo_auc(&t, &l, c).unwrap();
            prop_assert!((base.auc - moved.auc).abs() < 1e-12);
        }
    }
}

fn run_with(detected: Option<u32>) -> EpisodeRun {
    EpisodeRun {
        episode: String::new(),
        records: vec![],
        ledger: CostLedger::default(),
        timesteps: 1,
        detected_at: detected,
        first_ick1: vec![],
    }
}

#[test]
fn earliness_fixtures() {
    let cohort = Cohort::new(2, vec![Episode::new("a", 48, vec![Some(10), Some(30)]).unwrap()]).unwrap();
    let run = CohortRun { runs: vec![run_with(Some(26))], ledger: CostLedger::default() };
    assert_eq!(early_hours(&run, &cohort).mean, Some(4.0));
    let run = CohortRun { runs: vec![run_with(Some(30))], ledger: CostLedger::default() };
    assert_eq!(early_hours(&run, &cohort).mean, Some(0.0));

    let eps = vec![
        Episode::new("a", 48, vec![Some(10), Some(30)]).unwrap(),
        Episode::new("b", 48, vec![Some(5), Some(20)]).unwrap(),
        Episode::new("c", 48, vec![Some(5), Some(40)]).unwrap(),
        Episode::new("d", 48, vec![Some(5), Some(12)]).unwrap(),
        Episode::new("e", 48, vec![Some(5), Some(25)]).unwrap(),
        Episode::new("f", 48, vec![Some(5), None]).unwrap(),
    ];
    let cohort = Cohort::new(2, eps).unwrap();
    let runs = vec![Some(26), Some(18), None, Some(14), Some(25), Some(9)].into_iter().map(run_with).collect();
    let e = early_hours(&CohortRun { runs, ledger: CostLedger::default() }, &cohort);
    // (4 + 2 + (-2) + 0) / 4; the false alarm on f is not a true positive
    assert_eq!(e.mean, Some(1.0));
    assert_eq!((e.detected, e.undetected), (4, 1));
}

#[test]
fn cost_per_call_examples() {
    let five = Cost::from_units(5.0).unwrap();
    assert_eq!(avg_cost_per_call(five * 10, 10).unwrap(), 5.0);
    let chain = Cost::from_units(5.0).unwrap() + Cost::from_units(273.0).unwrap();
    assert_eq!(avg_cost_per_call(chain, 2).unwrap(), 139.0);
    assert!(avg_cost_per_call(Cost::ZERO, 0).is_err());
}

#[test]
fn hull_examples() {
    let square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    assert_eq!(convex_hull_area(&square), 1.0);
    assert_eq!(convex_hull_area(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]), 0.0);
    assert_eq!(convex_hull_area(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (1.0, 1.0)]), 0.0);
    assert_eq!(convex_hull_area(&[(1.0, 1.0)]), 0.0);
    assert_eq!(convex_hull_area(&[]), 0.0);
    // interior and edge points do not change the area
    let extra = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5), (0.5, 0.0)];
    assert_eq!(convex_hull_area(&extra), 1.0);
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn in_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let d1 = cross(a, b, p);
    let d2 = cross(b, c, p);
    let d3 = cross(c, a, p);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

/// Vertices are the points outside every triangle of three other points;
/// sorted by angle around their centroid, then shoelace.
fn brute_hull_area(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len();
    let mut verts = Vec::new();
    for i in 0..n {
        let mut inside = false;
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    if [a, b, c].contains(&i) {
                        continue;
                    }
                    if in_triangle(pts[i], pts[a], pts[b], pts[c]) {
                        inside = true;
                    }
                }
            }
        }
        if !inside {
            verts.push(pts[i]);
        }
    }
    let cx = verts.iter().map(|p| p.0).sum::<f64>() / verts.len() as f64;
    let cy = verts.iter().map(|p| p.1).sum::<f64>() / verts.len() as f64;
    verts.sort_by(|a, b| (a.1 - cy).atan2(a.0 - cx).total_cmp(&(b.1 - cy).atan2(b.0 - cx)));
    let mut twice = 0.0;
    for i in 0..verts.len() {
        let (a, b) = (verts[i], verts[(i + 1) % verts.len()]);
        twice += a.0 * b.1 - b.0 * a.1;
    }
    twice.abs() / 2.0
}

#[test]
fn hull_matches_brute_force_on_random_sevens() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let pts: Vec<(f64, f64)> = (0..7).map(|_| (rng.random_range(0.0..300.0), rng.random_range(60.0..95.0))).collect();
        let (got, want) = (convex_hull_area(&pts), brute_hull_area(&pts));
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");
    }
}

proptest! {
    #[test]
    fn hull_invariant_under_permutation_and_duplicates(
        pts in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 0..12),
        dup in proptest::collection::vec(0usize..12, 0..6),
        seed in any::<u64>(),
    ) {
        let base = convex_hull_area(&pts);
        let mut more = pts.clone();
        for d in dup {
            if !pts.is_empty() {
                more.push(pts[d % pts.len()]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..more.len()).rev() {
            let j = rng.random_range(0..=i);
            more.swap(i, j);
        }
        let moved = convex_hull_area(&more);
        prop_assert!((base - moved).abs() <= 1e-9 * base.max(1.0));
    }
}

fn pt(cost: f64, auc: f64) -> TradeoffPoint {
    TradeoffPoint { budget: cost, cost, auc, policy: None }
}

#[test]
fn tradeoff_units_and_recommendation() {
    assert_eq!(tradeoff_hull_area(&[pt(10.0, 0.7)]), 0.0);
    // triangle with base 10 cost units and height 10 AUC points
    let tri = [pt(0.0, 0.7), pt(10.0, 0.7), pt(10.0, 0.8)];
    assert!((tradeoff_hull_area(&tri) - 50.0).abs() < 1e-9);

    assert_eq!(recommend(&[]), None);
    assert_eq!(recommend(&[pt(5.0, 0.7)]), Some(0));
    // the knee beats both ends; the dominated point is never picked
    let pts = [pt(5.0, 0.70), pt(20.0, 0.78), pt(100.0, 0.80), pt(30.0, 0.75)];
    assert_eq!(recommend(&pts), Some(1));
    // equal score: cheaper wins
    let pts = [pt(0.0, 0.0), pt(1.0, 1.0)];
    assert_eq!(recommend(&pts), Some(0));
}
