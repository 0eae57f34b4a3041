//! Dirichlet knowledge distillation: a small multi-head perceptron mapping
//! features to one two-class Dirichlet per zoo model of a stage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{dirichlet_kl, expected_prob, teacher_dirichlet, ConfidenceMeasure, DirichletParams};
use crate::error::{Error, Result};
use crate::math;
use crate::table::LevelMatrix;

pub const FORMAT_VERSION: u32 = 1;
pub const ALPHA_FLOOR: f64 = 1e-6;
pub const ALPHA_CEIL: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// `KL(predicted || target)`.
    #[default]
    PredictedToTarget,
    TargetToPredicted,
}

impl KlDirection {
    pub fn name(self) -> &'static str {
        match self {
            KlDirection::PredictedToTarget => "predicted-to-target",
            KlDirection::TargetToPredicted => "target-to-predicted",
        }
    }
}

impl core::fmt::Display for KlDirection {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for KlDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [KlDirection::PredictedToTarget, KlDirection::TargetToPredicted]
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown KL direction {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkdConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub batch_size: usize,
    /// Concentration of the sharp teacher Dirichlet.
    pub beta: f64,
    pub ce_weight: f64,
    pub kl_direction: KlDirection,
    /// Global gradient-norm cap per minibatch step.
    pub grad_clip: f64,
    /// Fraction of episodes held out for the fidelity report.
    pub holdout_fraction: f64,
    pub seed: u64,
    pub measure: ConfidenceMeasure,
}

impl Default for DkdConfig {
    fn default() -> Self {
        DkdConfig {
            hidden: 64,
            epochs: 300,
            learning_rate: 0.1,
            patience: 5,
            batch_size: 64,
            beta: 100.0,
            ce_weight: 1.0,
            kl_direction: KlDirection::PredictedToTarget,
            grad_clip: 5.0,
            holdout_fraction: 0.2,
            seed: 1,
            measure: ConfidenceMeasure::NegExpectedEntropy,
        }
    }
}

impl DkdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Usage("hidden width, epochs, patience and batch size must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.learning_rate > 0.0 && self.ce_weight >= 0.0 && self.grad_clip > 0.0) {
            return Err(Error::Usage("beta, learning rate and gradient cap must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Usage("holdout fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Fully connected layer, weights row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = math::sqrt(6.0 / (inputs + outputs) as f64);
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        Dense { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs).zip(&self.bias)) {
            *o = b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Four dense layers (`d -> H -> H -> H -> 2K`) with tanh between them;
/// each head's pair of outputs becomes `(alpha0, alpha1)` through
/// `softplus + 1e-6`, capped at `1e6`. Inputs are standardised with the
/// training statistics stored in the net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DkdNet {
    pub version: u32,
    pub input_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub seed: u64,
    pub beta: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DkdLoss {
    pub kl: f64,
    pub ce: f64,
    pub total: f64,
}

/// Per-head loss: KL against `Dir(beta (1-p, p) + 1)` plus
/// `ce_weight` times the cross-entropy between `p` and the expected
/// probability of the prediction.
pub fn dkd_loss(pred: DirichletParams, p: f64, beta: f64, ce_weight: f64, direction: KlDirection) -> DkdLoss {
    dkd_loss_grad(pred, p, beta, ce_weight, direction).0
}

/// Loss and its gradient with respect to `(alpha0, alpha1)`.
pub fn dkd_loss_grad(
    pred: DirichletParams,
    p: f64,
    beta: f64,
    ce_weight: f64,
    direction: KlDirection,
) -> (DkdLoss, [f64; 2]) {
    let target = teacher_dirichlet(p, beta);
    let (a0, a1) = (pred.alpha0, pred.alpha1);
    let (b0, b1) = (target.alpha0, target.alpha1);
    let (sa, sb) = (a0 + a1, b0 + b1);
    let (kl, g_kl) = match direction {
        KlDirection::PredictedToTarget => {
            let t = math::trigamma(sa) * (sa - sb);
            (dirichlet_kl(pred, target), [(a0 - b0) * math::trigamma(a0) - t, (a1 - b1) * math::trigamma(a1) - t])
        }
        KlDirection::TargetToPredicted => {
            let base = math::digamma(sb) - math::digamma(sa);
            (
                dirichlet_kl(target, pred),
                [
                    math::digamma(a0) - math::digamma(b0) + base,
                    math::digamma(a1) - math::digamma(b1) + base,
                ],
            )
        }
    };
    let p = p.clamp(0.0, 1.0);
    let ce = -(p * math::ln(a1) + (1.0 - p) * math::ln(a0)) + math::ln(sa);
    let g_ce = [-(1.0 - p) / a0 + 1.0 / sa, -p / a1 + 1.0 / sa];
    let loss = DkdLoss { kl, ce, total: kl + ce_weight * ce };
    (loss, [g_kl[0] + ce_weight * g_ce[0], g_kl[1] + ce_weight * g_ce[1]])
}

/// Binary cross-entropy `H(p, q)` in nats.
pub fn cross_entropy(p: f64, q: f64) -> f64 {
    let q = math::clamp_prob(q);
    -(p * math::ln(q) + (1.0 - p) * math::ln(1.0 - q))
}

fn positive(z: f64) -> (f64, f64) {
    let a = math::softplus(z) + ALPHA_FLOOR;
    if a > ALPHA_CEIL {
        (ALPHA_CEIL, 0.0)
    } else {
        (a, math::sigmoid(z))
    }
}

/// Inverse of softplus for `y > 0`.
fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        math::ln(math::exp(y) - 1.0)
    }
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    x: Vec<f64>,
}

impl DkdNet {
    /// Glorot-uniform hidden layers; the output layer starts small with a
    /// bias matching an uninformative teacher, `Dir(beta/2 + 1, beta/2 + 1)`.
    pub fn init(input_dim: usize, hidden: usize, heads: usize, beta: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || heads == 0 {
            return Err(Error::Usage("network dimensions must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = vec![
            Dense::glorot(input_dim, hidden, &mut rng),
            Dense::glorot(hidden, hidden, &mut rng),
            Dense::glorot(hidden, hidden, &mut rng),
            Dense::glorot(hidden, 2 * heads, &mut rng),
        ];
        let out = &mut layers[3];
        out.weights.iter_mut().for_each(|w| *w *= 0.1);
        let b = softplus_inv(beta * 0.5 + 1.0);
        out.bias.iter_mut().for_each(|v| *v = b);
        Ok(DkdNet {
            version: FORMAT_VERSION,
            input_dim,
            hidden,
            heads,
            seed,
            beta,
            feature_mean: vec![0.0; input_dim],
            feature_scale: vec![1.0; input_dim],
            layers,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            (self.input_dim, self.hidden),
            (self.hidden, self.hidden),
            (self.hidden, self.hidden),
            (self.hidden, 2 * self.heads),
        ];
        let shapes_ok = self.layers.len() == 4
            && self.layers.iter().zip(dims).all(|(l, (i, o))| {
                l.inputs == i && l.outputs == o && l.weights.len() == i * o && l.bias.len() == o
            });
        if self.version != FORMAT_VERSION {
            return Err(Error::Validation(format!("unsupported surrogate format version {}", self.version)));
        }
        if !shapes_ok || self.feature_mean.len() != self.input_dim || self.feature_scale.len() != self.input_dim {
            return Err(Error::Validation("surrogate layer shapes are inconsistent".into()));
        }
        if !self.parameters().iter().all(|v| v.is_finite()) || !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::Validation("surrogate holds non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All weights and biases, layer by layer (weights before bias).
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + n]);
            off += n;
            let m = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + m]);
            off += m;
        }
    }

    fn workspace(&self) -> Workspace {
        let sizes = [self.hidden, self.hidden, self.hidden, 2 * self.heads];
        Workspace {
            acts: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            x: vec![0.0; self.input_dim],
        }
    }

    fn standardise(&self, features: &[f64], x: &mut [f64]) {
        for j in 0..self.input_dim {
            x[j] = (features[j] - self.feature_mean[j]) / self.feature_scale[j];
        }
    }

    /// Leaves hidden tanh activations and output pre-activations in `ws`.
    fn run(&self, ws: &mut Workspace) {
        let Workspace { acts, x, .. } = ws;
        for l in 0..4 {
            let (before, after) = acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &before[l - 1] };
            self.layers[l].apply(input, &mut after[0]);
            if l < 3 {
                after[0].iter_mut().for_each(|v| *v = math::tanh(*v));
            }
        }
    }

    fn heads_from(&self, z: &[f64], out: &mut Vec<DirichletParams>) {
        out.clear();
        for h in 0..self.heads {
            out.push(DirichletParams { alpha0: positive(z[2 * h]).0, alpha1: positive(z[2 * h + 1]).0 });
        }
    }

    /// One Dirichlet per head for a raw (unstandardised) feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<DirichletParams>> {
        if features.len() != self.input_dim {
            return Err(Error::Usage(format!(
                "feature vector has {} entries, surrogate expects {}",
                features.len(),
                self.input_dim
            )));
        }
        let mut ws = self.workspace();
        self.standardise(features, &mut ws.x);
        self.run(&mut ws);
        let mut out = Vec::with_capacity(self.heads);
        self.heads_from(&ws.acts[3], &mut out);
        Ok(out)
    }

    /// Mean loss over `rows` of the sample set and, when `grad` is given,
    /// its gradient accumulated in [`DkdNet::parameters`] order.
    pub fn loss_and_grad(
        &self,
        data: &DkdData<'_>,
        rows: &[usize],
        config: &DkdConfig,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let mut ws = self.workspace();
        let mut total = 0.0;
        let scale = 1.0 / rows.len() as f64;
        let offsets = self.layer_offsets();
        for &i in rows {
            self.standardise(data.row(i), &mut ws.x);
            self.run(&mut ws);
            let targets = data.targets.row(i);
            for h in 0..self.heads {
                let (a0, s0) = positive(ws.acts[3][2 * h]);
                let (a1, s1) = positive(ws.acts[3][2 * h + 1]);
                let (loss, g) = dkd_loss_grad(
                    DirichletParams { alpha0: a0, alpha1: a1 },
                    targets[h],
                    config.beta,
                    config.ce_weight,
                    config.kl_direction,
                );
                total += loss.total;
                ws.deltas[3][2 * h] = g[0] * s0 * scale;
                ws.deltas[3][2 * h + 1] = g[1] * s1 * scale;
            }
            if let Some(g) = grad.as_deref_mut() {
                self.backprop(&mut ws, g, &offsets);
            }
        }
        total * scale
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(4);
        let mut off = 0;
        for l in &self.layers {
            offs.push(off);
            off += l.param_count();
        }
        offs
    }

    fn backprop(&self, ws: &mut Workspace, grad: &mut [f64], offsets: &[usize]) {
        for l in (0..4).rev() {
            let layer = &self.layers[l];
            let input: &[f64] = if l == 0 { &ws.x } else { &ws.acts[l - 1] };
            let off = offsets[l];
            let (gw, gb) = grad[off..off + layer.param_count()].split_at_mut(layer.weights.len());
            let delta = &ws.deltas[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, x) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let (lower, upper) = ws.deltas.split_at_mut(l);
            let prev = &mut lower[l - 1];
            let delta = &upper[0];
            for (j, pd) in prev.iter_mut().enumerate() {
                let mut s = 0.0;
                for (o, d) in delta.iter().enumerate() {
                    s += layer.weights[o * layer.inputs + j] * d;
                }
                let a = ws.acts[l - 1][j];
                *pd = s * (1.0 - a * a);
            }
        }
    }
}

/// Training rows for one stage's surrogate.
#[derive(Debug, Clone, Copy)]
pub struct DkdData<'a> {
    /// Row-major `rows x dim` raw features.
    pub features: &'a [f64],
    pub dim: usize,
    /// Teacher probability per row and head.
    pub targets: &'a LevelMatrix,
    /// Episode index per row; held-out rows are chosen by whole episodes.
    pub groups: &'a [usize],
}

impl DkdData<'_> {
    pub fn rows(&self) -> usize {
        self.targets.rows()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn validate(&self) -> Result<()> {
        let n = self.rows();
        if self.dim == 0 || self.features.len() != n * self.dim || self.groups.len() != n {
            return Err(Error::Usage("surrogate training data has inconsistent shapes".into()));
        }
        if n == 0 {
            return Err(Error::Usage("surrogate training data is empty".into()));
        }
        if let Some(i) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("feature row {} holds a non-finite value", i / self.dim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadFidelity {
    /// Mean |q_hat - q| under the configured confidence measure.
    pub confidence_mae: f64,
    /// Mean |p_hat - p|.
    pub prob_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DkdReport {
    pub measure: ConfidenceMeasure,
    pub train_rows: usize,
    pub holdout_rows: usize,
    pub heads: Vec<HeadFidelity>,
    /// Mean minibatch loss of every epoch.
    pub history: Vec<f64>,
    pub final_learning_rate: f64,
}

/// Held-out fidelity of a trained net over the given rows.
pub fn fidelity(net: &DkdNet, data: &DkdData<'_>, rows: &[usize], measure: ConfidenceMeasure) -> Result<Vec<HeadFidelity>> {
    let mut acc = vec![(0.0, 0.0); net.heads];
    for &i in rows {
        let pred = net.forward(data.row(i))?;
        for (h, d) in pred.iter().enumerate() {
            let p = data.targets.get(i, h);
            acc[h].0 += (measure.of_dirichlet(*d) - measure.of_prob(p, net.beta)).abs();
            acc[h].1 += (expected_prob(*d) - p).abs();
        }
    }
    let n = rows.len().max(1) as f64;
    Ok(acc.into_iter().map(|(c, p)| HeadFidelity { confidence_mae: c / n, prob_mae: p / n }).collect())
}

/// Trains a surrogate by minibatch SGD with global-norm clipping; the
/// learning rate halves after `patience` epochs without a new best epoch
/// loss and the best parameters are kept.
pub fn dkd_train(data: &DkdData<'_>, config: &DkdConfig) -> Result<(DkdNet, DkdReport)> {
    config.validate()?;
    data.validate()?;
    let heads = data.targets.levels();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train, holdout) = split_by_group(data, config.holdout_fraction, &mut rng);
    let mut net = DkdNet::init(data.dim, config.hidden, heads, config.beta, config.seed)?;
    let (mean, scale) = feature_stats(data, &train);
    net.feature_mean = mean;
    net.feature_scale = scale;

    let mut params = net.parameters();
    let mut best = (params.clone(), f64::INFINITY);
    let mut grad = vec![0.0; params.len()];
    let mut order = train.clone();
    let mut lr = config.learning_rate;
    let mut stale = 0;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = net.loss_and_grad(data, batch, config, Some(&mut grad));
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "surrogate loss became {loss} at epoch {epoch} (lr {lr})"
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            let norm = math::sqrt(grad.iter().map(|g| g * g).sum());
            if !norm.is_finite() {
                return Err(Error::Numerical(format!(
                    "surrogate gradient became {norm} at epoch {epoch} (lr {lr})"
                )));
            }
            let step = if norm > config.grad_clip { lr * config.grad_clip / norm } else { lr };
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= step * g;
            }
            net.set_parameters(&params);
        }
        let epoch_loss = epoch_loss / train.len() as f64;
        history.push(epoch_loss);
        if epoch_loss < best.1 {
            best = (params.clone(), epoch_loss);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                lr *= 0.5;
                stale = 0;
            }
        }
    }
    net.set_parameters(&best.0);
    let eval_rows = if holdout.is_empty() { &train } else { &holdout };
    let heads = fidelity(&net, data, eval_rows, config.measure)?;
    let report = DkdReport {
        measure: config.measure,
        train_rows: train.len(),
        holdout_rows: holdout.len(),
        heads,
        history,
        final_learning_rate: lr,
    };
    Ok((net, report))
}

fn split_by_group(data: &DkdData<'_>, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut groups: Vec<usize> = data.groups.to_vec();
    groups.sort_unstable();
    groups.dedup();
    groups.shuffle(rng);
    let held = if groups.len() < 2 { 0 } else { ((groups.len() as f64 * fraction) as usize).min(groups.len() - 1) };
    let mut is_held = alloc::collections::BTreeSet::new();
    is_held.extend(groups[..held].iter().copied());
    (0..data.rows()).partition(|i| !is_held.contains(&data.groups[*i]))
}

fn feature_stats(data: &DkdData<'_>, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; data.dim];
    for &i in rows {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x / n;
        }
    }
    let mut var = vec![0.0; data.dim];
    for &i in rows {
        for ((v, x), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
            *v += (x - m) * (x - m) / n;
        }
    }
    let scale = var.into_iter().map(|v| if v > 1e-12 { math::sqrt(v) } else { 1.0 }).collect();
    (mean, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_output_layer_is_symmetric() {
        let mut net = DkdNet::init(3, 8, 2, 100.0, 5).unwrap();
        net.layers[3].weights.iter_mut().for_each(|w| *w = 0.0);
        net.layers[3].bias.iter_mut().for_each(|w| *w = 0.0);
        for d in net.forward(&[0.3, -1.0, 2.0]).unwrap() {
            assert!((d.alpha0 - (math::LN_2 + ALPHA_FLOOR)).abs() < 1e-12);
            assert_eq!(d.alpha0, d.alpha1);
            assert_eq!(expected_prob(d), 0.5);
        }
    }

    #[test]
    fn forward_is_deterministic_and_checks_dimension() {
        let a = DkdNet::init(4, 6, 3, 100.0, 9).unwrap();
        let b = DkdNet::init(4, 6, 3, 100.0, 9).unwrap();
        let x = [0.1, 0.2, -0.3, 4.0];
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
        assert!(a.forward(&[1.0]).is_err());
    }

    #[test]
    fn identity_and_ce_minimum() {
        let p = 0.3;
        let target = teacher_dirichlet(p, 100.0);
        let l = dkd_loss(target, p, 100.0, 1.0, KlDirection::PredictedToTarget);
        assert!(l.kl.abs() < 1e-10);
        // expected prob of the target is not exactly p, but CE with q = p hits H(p)
        assert!((cross_entropy(p, p) + crate::confidence::neg_entropy(p)).abs() < 1e-12);
    }

    #[test]
    fn parameter_round_trip() {
        let mut net = DkdNet::init(2, 3, 1, 10.0, 1).unwrap();
        let mut p = net.parameters();
        p[0] = 42.0;
        net.set_parameters(&p);
        assert_eq!(net.layers[0].weights[0], 42.0);
        assert_eq!(net.parameters(), p);
        net.validate().unwrap();
    }
}
