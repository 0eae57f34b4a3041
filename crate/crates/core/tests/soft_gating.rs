use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unfold_core::gate_soft::{soft_gating_train, SoftGateParams, SoftObjective, SoftTrainConfig};
use unfold_core::table::LevelMatrix;

struct Data {
    q: LevelMatrix,
    p: LevelMatrix,
    y: Vec<bool>,
}

fn random_data(seed: u64, n: usize, levels: usize) -> Data {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = LevelMatrix::new(levels);
    let mut p = LevelMatrix::new(levels);
    let mut y = Vec::new();
    for _ in 0..n {
        let label = rng.random_bool(0.4);
        let mut qr = Vec::new();
        let mut pr = Vec::new();
        for k in 0..levels {
            let signal = 0.15 * (k as f64 + 1.0);
            let base: f64 = rng.random_range(0.05..0.95);
            let pk = if label { (base + signal).min(0.98) } else { (base - signal).max(0.02) };
            pr.push(pk);
            qr.push((2.0 * pk - 1.0).abs());
        }
        q.push_row(&qr);
        p.push_row(&pr);
        y.push(label);
    }
    Data { q, p, y }
}

/// Central differences with h = 1e-5; points within h of a ReLU kink are
/// skipped.
fn near_kink(params: &SoftGateParams, q: &LevelMatrix, h: f64) -> bool {
    q.iter_rows().any(|row| {
        (0..params.levels()).any(|k| (params.a[k] * row[k] - params.b[k]).abs() < 4.0 * h * (1.0 + row[k]))
    })
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let costs = vec![5.0, 86.0, 258.0];
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for trial in 0..60 {
        let d = random_data(trial, 40, 3);
        let obj = SoftObjective::new(&d.q, &d.p, &d.y, costs.clone(), 1.0, 40.0, 5.0, 0.05).unwrap();
        let params = SoftGateParams {
            a: (0..3).map(|_| rng.random_range(0.2..3.0)).collect(),
            b: (0..3).map(|_| rng.random_range(-0.5..1.0)).collect(),
        };
        if near_kink(&params, &d.q, h) {
            continue;
        }
        let rows: Vec<usize> = (0..d.y.len()).collect();
        let mut grad = vec![0.0; 6];
        obj.value_and_grad(&params, &rows, Some(&mut grad));
        for j in 0..6 {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let (vp, vm) = if j < 3 { (&mut plus.a[j], &mut minus.a[j]) } else { (&mut plus.b[j - 3], &mut minus.b[j - 3]) };
            *vp += h;
            *vm -= h;
            let fd = (obj.value(&plus).total - obj.value(&minus).total) / (2.0 * h);
            let tol = 1e-4 * (1.0 + fd.abs());
            assert!((fd - grad[j]).abs() < tol, "trial {trial} param {j}: analytic {} vs fd {fd}", grad[j]);
        }
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} kink-free points");
}

#[test]
fn training_never_ends_above_initial_loss() {
    let d = random_data(3, 300, 3);
    let obj = SoftObjective::new(&d.q, &d.p, &d.y, vec![5.0, 86.0, 258.0], 1.0, 60.0, 10.0, 0.01).unwrap();
    let out = soft_gating_train(&obj, &SoftTrainConfig { epochs: 40, batch_size: 32, ..Default::default() }).unwrap();
    assert!(out.best.total <= out.initial.total);
    assert_eq!(out.history.len(), 40);
}

fn multi_open(params: &SoftGateParams, q: &LevelMatrix) -> usize {
    q.iter_rows().filter(|r| params.weights(r).iter().filter(|w| **w > 0.0).count() >= 2).count()
}

#[test]
fn budget_and_sparsity_monotonicity() {
    let d = random_data(11, 400, 3);
    let costs = vec![5.0, 86.0, 258.0];
    let cfg = SoftTrainConfig { epochs: 60, batch_size: 64, ..Default::default() };
    let train = |budget: f64, lambda: f64, mu: f64| {
        let obj = SoftObjective::new(&d.q, &d.p, &d.y, costs.clone(), 1.0, budget, lambda, mu).unwrap();
        let out = soft_gating_train(&obj, &cfg).unwrap();
        (obj.value(&out.params).cost, multi_open(&out.params, &d.q))
    };
    // a tight budget with a heavy multiplier lowers the expected cost
    let (loose, _) = train(1e6, 0.0, 0.0);
    let (tight, _) = train(10.0, 200.0, 0.0);
    assert!(tight <= loose + 1e-9, "tight {tight} loose {loose}");
    let (_, dense) = train(1e6, 0.0, 0.0);
    let (_, sparse) = train(1e6, 0.0, 2.0);
    assert!(sparse <= dense, "sparse {sparse} dense {dense}");
}
