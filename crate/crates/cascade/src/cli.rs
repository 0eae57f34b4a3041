//! The `unfold-cascade` command line. Every subcommand writes into an output
//! directory and echoes its parsed arguments there as `config.json`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use unfold_core::benchmark::split_every;
use unfold_core::cohort::Cohort;
use unfold_core::confidence::ConfidenceMeasure;
use unfold_core::cost::Cost;
use unfold_core::dkd::{dkd_train, DkdConfig, DkdNet, KlDirection};
use unfold_core::engine::{Engine, RunMode};
use unfold_core::gate_hard::HardSearchConfig;
use unfold_core::gate_soft::SoftTrainConfig;
use unfold_core::metrics::{evaluate, recommend, tradeoff_hull_area, TradeoffPoint};
use unfold_core::policy::{BudgetSplit, GateMode, GateOrder, GatePolicy, Ick0Behavior, TransitionTiming};
use unfold_core::scores::{ConfidenceTable, FeatureTable, ScoreMatrix};
use unfold_core::sweep::{sweep, Bench};
use unfold_core::synth::{gen_synthetic, SynthConfig, SynthModel, SynthStage};
use unfold_core::train::{distill_confidences, surrogate_rows, train_policy, TrainConfig};
use unfold_core::zoo::ModelZoo;

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Parser, Serialize)]
#[command(name = "unfold-cascade", version, about = "Cost-aware two-dimensional prediction cascade: data, training, simulation and budget sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a seeded synthetic cohort with zoo, scores and features
    Gen(GenArgs),
    /// Train one Dirichlet surrogate per stage on the zoo's scores
    TrainDkd(TrainDkdArgs),
    /// Train a gate policy (IDK gates and ICK1 thresholds) under a budget
    Train(TrainArgs),
    /// Run a cohort through a trained policy; write traces, ledger and metrics
    Simulate(SimulateArgs),
    /// Train and evaluate one policy per budget and summarise the tradeoff
    Sweep(SweepArgs),
    /// Summarise the tradeoff points of a sweep directory
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Root seed; each random component derives its own stream from it
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Number of episodes [default: 5000]
    #[arg(long)]
    pub n_episodes: Option<usize>,
    /// Shortest episode length in timesteps [default: 24]
    #[arg(long)]
    pub min_len: Option<u32>,
    /// Longest episode length in timesteps [default: 48]
    #[arg(long)]
    pub max_len: Option<u32>,
    /// Number of stages of a generated model ladder instead of the built-in six-model zoo
    #[arg(long, conflicts_with = "zoo")]
    pub stages: Option<usize>,
    /// Models per stage of a generated model ladder
    #[arg(long, conflicts_with = "zoo")]
    pub models_per_stage: Option<usize>,
    /// Zoo manifest to simulate; its val_auc column is each model's target AUC
    #[arg(long)]
    pub zoo: Option<PathBuf>,
    /// Per-stage probability of entering the stage given the previous one, comma separated
    #[arg(long, value_delimiter = ',')]
    pub onset_rates: Vec<f64>,
    /// Timesteps before an onset that count as positive [default: 12]
    #[arg(long)]
    pub early_window: Option<u32>,
    /// Feature dimension [default: 8]
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Standard deviation of the noise added to features [default: 0.1]
    #[arg(long)]
    pub feature_noise: Option<f64>,
    /// Share of the best model's latent noise common to its stage, in [0, 1) [default: 0.95]
    #[arg(long)]
    pub shared_noise: Option<f64>,
    /// AR(1) coefficient of the latent noise over time, in [0, 1) [default: 0.95]
    #[arg(long)]
    pub autocorrelation: Option<f64>,
    /// Log-odds added to every score [default: 0]
    #[arg(long)]
    pub prior_shift: Option<f64>,
    /// Largest accepted gap between a model's empirical and target AUC [default: 0.02]
    #[arg(long)]
    pub auc_tolerance: Option<f64>,
    /// Every N-th episode goes to train_cohort.csv, the rest to test_cohort.csv
    #[arg(long, default_value_t = 5)]
    pub train_every: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainDkdArgs {
    /// Zoo manifest CSV
    #[arg(long)]
    pub zoo: PathBuf,
    /// Score table CSV
    #[arg(long)]
    pub scores: PathBuf,
    /// Feature table CSV
    #[arg(long)]
    pub features: PathBuf,
    /// Training cohort CSV
    #[arg(long)]
    pub cohort: PathBuf,
    /// Output directory for dkd_stage<s>.json and the fidelity report
    #[arg(long)]
    pub out: PathBuf,
    /// Concentration of the sharp teacher Dirichlet
    #[arg(long, default_value_t = 100.0)]
    pub beta: f64,
    /// Hidden layer width
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Maximum training epochs
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    /// Initial SGD learning rate
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Epochs without improvement before the learning rate is halved
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Minibatch size
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Weight of the cross-entropy term next to the KL term
    #[arg(long, default_value_t = 1.0)]
    pub ce_weight: f64,
    /// KL direction: predicted-to-target or target-to-predicted
    #[arg(long, default_value_t = KlDirection::PredictedToTarget)]
    pub kl_direction: KlDirection,
    /// Global gradient-norm cap per step
    #[arg(long, default_value_t = 5.0)]
    pub grad_clip: f64,
    /// Fraction of episodes held out for the fidelity report
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Seed for initialisation, shuffling and the held-out split
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Measure used in the fidelity report: max-prob, entropy, entropy-of-expected or mutual-information
    #[arg(long, default_value_t = ConfidenceMeasure::NegExpectedEntropy)]
    pub confidence: ConfidenceMeasure,
    /// Timesteps before an onset that count as positive
    #[arg(long, default_value_t = 12)]
    pub early_window: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRule {
    Equal,
    Proportional,
    Explicit,
}

/// Options shared by `train` and `sweep`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainOpts {
    /// Confidence measure: max-prob, entropy, entropy-of-expected or mutual-information
    #[arg(long, default_value_t = ConfidenceMeasure::MaxProb)]
    pub confidence: ConfidenceMeasure,
    /// Teacher Dirichlet concentration used by the Dirichlet measures
    #[arg(long, default_value_t = 100.0)]
    pub beta: f64,
    /// How the global budget is divided among stages
    #[arg(long, value_enum, default_value_t = SplitRule::Equal)]
    pub budget_split: SplitRule,
    /// Per-stage budgets for --budget-split explicit, comma separated; must sum to the budget
    #[arg(long, value_delimiter = ',')]
    pub stage_budgets: Vec<f64>,
    /// Hard gating: upper bound of the cutoff grid
    #[arg(long, default_value_t = 0.95)]
    pub max_a: f64,
    /// Hard gating: grid points per cutoff
    #[arg(long, default_value_t = 50)]
    pub n_bins: usize,
    /// Soft gating: weight of the budget penalty
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    /// Soft gating: weight of the sparsity penalty
    #[arg(long, default_value_t = 0.01)]
    pub mu: f64,
    /// Soft gating: maximum epochs
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Soft gating: epochs without improvement before the learning rate is halved
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Soft gating: initial learning rate
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Soft gating: minibatch size
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Soft gating: initialisation and shuffling seed
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Timesteps before an onset that count as positive
    #[arg(long, default_value_t = 12)]
    pub early_window: u32,
    /// ICK0 outcome: stay, reset-to-level-1 or terminal
    #[arg(long, default_value_t = Ick0Behavior::Stay)]
    pub ick0: Ick0Behavior,
    /// When a transitioned query first meets the next stage: next-step or same-step
    #[arg(long, default_value_t = TransitionTiming::NextStep)]
    pub timing: TransitionTiming,
    /// Gate consulted first when both fire: idk-first or ick1-first
    #[arg(long, default_value_t = GateOrder::IdkFirst)]
    pub order: GateOrder,
    /// Directory holding dkd_stage<s>.json surrogates (soft gating)
    #[arg(long)]
    pub dkd: Option<PathBuf>,
    /// Feature table CSV fed to the surrogates (soft gating)
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Zoo manifest CSV
    #[arg(long)]
    pub zoo: PathBuf,
    /// Score table CSV
    #[arg(long)]
    pub scores: PathBuf,
    /// Training cohort CSV
    #[arg(long)]
    pub cohort: PathBuf,
    /// Gating: hard or soft
    #[arg(long, default_value_t = GateMode::Hard)]
    pub gating: GateMode,
    /// Global average cost per timestep call
    #[arg(long, default_value_t = 100.0)]
    pub budget: f64,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Output directory for policy.json and the training report
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Policy JSON written by `train`
    #[arg(long)]
    pub policy: PathBuf,
    /// Zoo manifest CSV
    #[arg(long)]
    pub zoo: PathBuf,
    /// Score table CSV
    #[arg(long)]
    pub scores: PathBuf,
    /// Cohort CSV to run
    #[arg(long)]
    pub cohort: PathBuf,
    /// Feature table CSV, needed when the policy has soft-gated stages
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// streaming or one-shot
    #[arg(long, default_value_t = RunMode::Streaming)]
    pub mode: RunMode,
    /// Output directory for traces.csv, ledger.json and metrics.json
    #[arg(long)]
    pub traces: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepGating {
    Hard,
    Soft,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Zoo manifest CSV
    #[arg(long)]
    pub zoo: PathBuf,
    /// Score table CSV
    #[arg(long)]
    pub scores: PathBuf,
    /// Cohort CSV used for training
    #[arg(long)]
    pub train_cohort: PathBuf,
    /// Cohort CSV used for evaluation
    #[arg(long)]
    pub test_cohort: PathBuf,
    /// Gating modes to sweep
    #[arg(long, value_enum, default_value_t = SweepGating::Both)]
    pub gating: SweepGating,
    /// Global budgets, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub budgets: Vec<f64>,
    /// streaming or one-shot evaluation
    #[arg(long, default_value_t = RunMode::Streaming)]
    pub mode: RunMode,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Output directory for the points CSVs, policies and summary
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Sweep output directory
    #[arg(long)]
    pub input: PathBuf,
    /// Directory to write report.json into
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a, command),
        Command::TrainDkd(a) => cmd_train_dkd(a, command),
        Command::Train(a) => cmd_train(a, command),
        Command::Simulate(a) => cmd_simulate(a, command),
        Command::Sweep(a) => cmd_sweep(a, command),
        Command::Report(a) => cmd_report(a, command),
    }
}

fn echo_config(dir: &Path, command: &Command) -> Result<()> {
    io::write_json(
        &dir.join("config.json"),
        &json!({ "tool": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION"), "command": command }),
    )
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn cmd_gen(a: &GenArgs, command: &Command) -> Result<()> {
    let config = synth_config(a)?;
    let out = gen_synthetic(&config)?;
    let (train, test) = split_every(&out.cohort, a.train_every)?;
    io::ensure_dir(&a.out)?;
    io::write_zoo(&a.out.join("zoo.csv"), &out.zoo)?;
    io::write_cohort(&a.out.join("cohort.csv"), &out.cohort)?;
    io::write_cohort(&a.out.join("train_cohort.csv"), &train)?;
    io::write_cohort(&a.out.join("test_cohort.csv"), &test)?;
    io::write_scores(&a.out.join("scores.csv"), &out.scores)?;
    io::write_features(&a.out.join("features.csv"), &out.features)?;
    let models: Vec<_> = config
        .stages
        .iter()
        .zip(&out.empirical_auc)
        .flat_map(|(stage, aucs)| {
            stage.models.iter().zip(aucs).map(|(m, e)| json!({ "model_id": m.id, "target_auc": m.auc, "empirical_auc": e }))
        })
        .collect();
    io::write_json(
        &a.out.join("gen_report.json"),
        &json!({
            "episodes": out.cohort.len(),
            "train_episodes": train.len(),
            "test_episodes": test.len(),
            "attempts": out.attempts,
            "models": models,
            "synth": config,
        }),
    )?;
    echo_config(&a.out, command)?;
    println!(
        "generated {} episodes ({} train, {} test), {} models over {} stages in {} attempt(s)",
        out.cohort.len(),
        train.len(),
        test.len(),
        out.zoo.model_count(),
        out.zoo.stage_count(),
        out.attempts
    );
    Ok(())
}

fn synth_config(a: &GenArgs) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::benchmark(a.seed);
    let default_rate = |s: usize| if s == 0 { 0.4 } else { 0.5 };
    if let Some(path) = &a.zoo {
        let zoo = io::read_zoo(path)?;
        cfg.stages = (0..zoo.stage_count())
            .map(|s| {
                let models = zoo
                    .stage(s)
                    .iter()
                    .map(|m| {
                        let auc = m.val_auc.ok_or_else(|| usage(format!("--zoo: model {} needs a val_auc target", m.id)))?;
                        Ok(SynthModel { id: m.id.clone(), cost: m.cost.units(), auc })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SynthStage { onset_rate: default_rate(s), dkd_cost: zoo.dkd_cost(s).units(), models })
            })
            .collect::<Result<Vec<_>>>()?;
    } else if a.stages.is_some() || a.models_per_stage.is_some() {
        let stages = a.stages.unwrap_or(2);
        let per_stage = a.models_per_stage.unwrap_or(3);
        if stages == 0 || per_stage == 0 {
            return Err(usage("--stages and --models-per-stage must be >= 1"));
        }
        cfg.stages = (0..stages)
            .map(|s| SynthStage {
                onset_rate: default_rate(s),
                dkd_cost: 1.0,
                models: (0..per_stage)
                    .map(|k| {
                        let frac = if per_stage == 1 { 1.0 } else { k as f64 / (per_stage - 1) as f64 };
                        let cost = (5.0 + 2.0 * s as f64) * 50f64.powf(frac);
                        SynthModel {
                            id: format!("m{}_{}", s + 1, k + 1),
                            cost: (cost * 1000.0).round() / 1000.0,
                            auc: (0.76 + 0.06 * s as f64 + 0.09 * frac).min(0.97),
                        }
                    })
                    .collect(),
            })
            .collect();
    }
    if !a.onset_rates.is_empty() {
        if a.onset_rates.len() != cfg.stages.len() {
            return Err(usage(format!(
                "--onset-rates has {} values for {} stages",
                a.onset_rates.len(),
                cfg.stages.len()
            )));
        }
        for (stage, &r) in cfg.stages.iter_mut().zip(&a.onset_rates) {
            stage.onset_rate = r;
        }
    }
    cfg.episodes = a.n_episodes.unwrap_or(cfg.episodes);
    cfg.min_len = a.min_len.unwrap_or(cfg.min_len);
    cfg.max_len = a.max_len.unwrap_or(cfg.max_len);
    cfg.early_window = a.early_window.unwrap_or(cfg.early_window);
    cfg.feature_dim = a.feature_dim.unwrap_or(cfg.feature_dim);
    cfg.feature_noise = a.feature_noise.unwrap_or(cfg.feature_noise);
    cfg.shared_noise = a.shared_noise.unwrap_or(cfg.shared_noise);
    cfg.autocorrelation = a.autocorrelation.unwrap_or(cfg.autocorrelation);
    cfg.prior_shift = a.prior_shift.unwrap_or(cfg.prior_shift);
    cfg.auc_tolerance = a.auc_tolerance.unwrap_or(cfg.auc_tolerance);
    Ok(cfg)
}

/// Zoo, scores and a cohort, with the scores checked to cover it.
fn load_data(zoo: &Path, scores: &Path, cohorts: &[&Path]) -> Result<(ModelZoo, ScoreMatrix, Vec<Cohort>)> {
    let zoo = io::read_zoo(zoo)?;
    let scores_table = io::read_scores(scores, &zoo)?;
    let mut out = Vec::new();
    for path in cohorts {
        let cohort = io::read_cohort(path, zoo.stage_count())?;
        scores_table.check_coverage(&cohort).map_err(|e| e.context(&format!("{}", scores.display())))?;
        out.push(cohort);
    }
    Ok((zoo, scores_table, out))
}

fn dkd_file(s: usize) -> String {
    format!("dkd_stage{}.json", s + 1)
}

fn cmd_train_dkd(a: &TrainDkdArgs, command: &Command) -> Result<()> {
    let (zoo, scores, cohorts) = load_data(&a.zoo, &a.scores, &[&a.cohort])?;
    let features = io::read_features(&a.features)?;
    let config = DkdConfig {
        hidden: a.hidden,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        patience: a.patience,
        batch_size: a.batch_size,
        beta: a.beta,
        ce_weight: a.ce_weight,
        kl_direction: a.kl_direction,
        grad_clip: a.grad_clip,
        holdout_fraction: a.holdout,
        seed: a.seed,
        measure: a.confidence,
    };
    config.validate()?;
    io::ensure_dir(&a.out)?;
    let mut reports = Vec::new();
    for s in 0..zoo.stage_count() {
        let ctx = format!("stage {}", s + 1);
        let rows = surrogate_rows(&zoo, &cohorts[0], &scores, &features, s, a.early_window).map_err(|e| e.context(&ctx))?;
        let (net, report) = dkd_train(&rows.data(), &config).map_err(|e| e.context(&ctx))?;
        io::write_json(&a.out.join(dkd_file(s)), &net)?;
        for (k, head) in report.heads.iter().enumerate() {
            println!(
                "stage {} model {}: held-out confidence MAE {:.4}, probability MAE {:.4}",
                s + 1,
                zoo.model(s, k).id,
                head.confidence_mae,
                head.prob_mae
            );
        }
        reports.push(json!({ "stage": s + 1, "models": zoo.stage(s).iter().map(|m| &m.id).collect::<Vec<_>>(), "report": report }));
    }
    io::write_json(&a.out.join("dkd_report.json"), &reports)?;
    echo_config(&a.out, command)
}

fn train_config(opts: &TrainOpts, mode: GateMode, budget: f64) -> Result<TrainConfig> {
    let split = match opts.budget_split {
        SplitRule::Equal | SplitRule::Proportional if !opts.stage_budgets.is_empty() => {
            return Err(usage("--stage-budgets needs --budget-split explicit"))
        }
        SplitRule::Equal => BudgetSplit::Equal,
        SplitRule::Proportional => BudgetSplit::Proportional,
        SplitRule::Explicit if opts.stage_budgets.is_empty() => {
            return Err(usage("--budget-split explicit needs --stage-budgets"))
        }
        SplitRule::Explicit => BudgetSplit::Explicit(opts.stage_budgets.clone()),
    };
    Ok(TrainConfig {
        mode,
        measure: opts.confidence,
        beta: opts.beta,
        budget,
        split,
        early_window: opts.early_window,
        hard: HardSearchConfig { max_a: opts.max_a, n_bins: opts.n_bins },
        soft: SoftTrainConfig {
            lambda: opts.lambda,
            mu: opts.mu,
            epochs: opts.epochs,
            learning_rate: opts.learning_rate,
            patience: opts.patience,
            batch_size: opts.batch_size,
            seed: opts.seed,
        },
        ick0: opts.ick0,
        timing: opts.timing,
        order: opts.order,
    })
}

fn read_net(path: &Path, zoo: &ModelZoo, s: usize) -> Result<DkdNet> {
    let net: DkdNet = io::read_json(path)?;
    net.validate().map_err(|e| e.context(&format!("{}", path.display())))?;
    if net.heads != zoo.levels(s) {
        return Err(Error::Core(unfold_core::Error::Validation(format!(
            "{}: surrogate has {} heads, stage {} has {} models",
            path.display(),
            net.heads,
            s + 1,
            zoo.levels(s)
        ))));
    }
    Ok(net)
}

/// Surrogates from `--dkd` and their confidences over `cohort`.
fn surrogates(opts: &TrainOpts, zoo: &ModelZoo, cohort: &Cohort) -> Result<(Vec<DkdNet>, Vec<Option<ConfidenceTable>>)> {
    let (Some(dir), Some(features)) = (&opts.dkd, &opts.features) else {
        return Err(usage("soft gating needs --dkd and --features"));
    };
    let features = io::read_features(features)?;
    let mut nets = Vec::new();
    let mut tables = Vec::new();
    for s in 0..zoo.stage_count() {
        let net = read_net(&dir.join(dkd_file(s)), zoo, s)?;
        tables.push(Some(distill(&net, &features, cohort, opts.confidence, s)?));
        nets.push(net);
    }
    Ok((nets, tables))
}

fn distill(net: &DkdNet, features: &FeatureTable, cohort: &Cohort, measure: ConfidenceMeasure, s: usize) -> Result<ConfidenceTable> {
    Ok(distill_confidences(net, features, cohort, measure).map_err(|e| e.context(&format!("stage {} surrogate", s + 1)))?)
}

/// Writes the nets next to `policy_path` and points the policy at them.
fn attach_surrogates(policy: &mut GatePolicy, nets: &[DkdNet], dir: &Path) -> Result<()> {
    for (s, net) in nets.iter().enumerate() {
        if policy.needs_surrogate(s) {
            io::write_json(&dir.join(dkd_file(s)), net)?;
            policy.stages[s].surrogate = Some(dkd_file(s));
        }
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs, command: &Command) -> Result<()> {
    let config = train_config(&a.opts, a.gating, a.budget)?;
    let (zoo, scores, cohorts) = load_data(&a.zoo, &a.scores, &[&a.cohort])?;
    let cohort = &cohorts[0];
    let (nets, distilled) = match a.gating {
        GateMode::Soft => surrogates(&a.opts, &zoo, cohort)?,
        GateMode::Hard => (Vec::new(), Vec::new()),
    };
    let (mut policy, report) = train_policy(&zoo, cohort, &scores, &distilled, &config)?;
    io::ensure_dir(&a.out)?;
    attach_surrogates(&mut policy, &nets, &a.out)?;
    io::write_json(&a.out.join("policy.json"), &policy)?;
    io::write_json(&a.out.join("train_report.json"), &report)?;
    echo_config(&a.out, command)?;
    for r in &report.stages {
        println!(
            "stage {}: {} samples ({} positive), budget {:.4}, train cost per call {:.4}, routed {:?}, thresholds {:?}",
            r.stage, r.samples, r.positives, r.budget, r.train_cost, r.routed, r.thresholds
        );
        if let Some(last) = r.loss_history.last() {
            println!("stage {}: soft gating loss {:.6} after {} epochs", r.stage, last, r.loss_history.len());
        }
        if let Some(w) = &r.warning {
            eprintln!("warning: stage {}: {w}", r.stage);
        }
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, command: &Command) -> Result<()> {
    let (zoo, scores, cohorts) = load_data(&a.zoo, &a.scores, &[&a.cohort])?;
    let cohort = &cohorts[0];
    let policy: GatePolicy = io::read_json(&a.policy)?;
    policy.validate(&zoo).map_err(|e| e.context(&format!("{}", a.policy.display())))?;
    let policy_dir = a.policy.parent().unwrap_or(Path::new("."));
    let mut tables = vec![None; zoo.stage_count()];
    if (0..zoo.stage_count()).any(|s| policy.needs_surrogate(s)) {
        let features = a.features.as_ref().ok_or_else(|| usage("the policy has soft-gated stages; pass --features"))?;
        let features = io::read_features(features)?;
        for (s, table) in tables.iter_mut().enumerate() {
            if !policy.needs_surrogate(s) {
                continue;
            }
            let file = policy.stages[s]
                .surrogate
                .as_ref()
                .ok_or_else(|| Error::Core(unfold_core::Error::Validation(format!("stage {} is soft-gated but names no surrogate", s + 1))))?;
            let net = read_net(&policy_dir.join(file), &zoo, s)?;
            *table = Some(distill(&net, &features, cohort, policy.measure, s)?);
        }
    }
    let engine = Engine::new(&zoo, &policy, &scores, &tables)?;
    let run = engine.run_cohort(cohort, a.mode)?;
    let traced: Cost = run.runs.iter().flat_map(|r| &r.records).map(|r| r.cost).sum();
    let total = run.ledger.total();
    if traced != total || run.ledger.recompute(&zoo) != total {
        return Err(Error::Core(unfold_core::Error::Integrity(format!(
            "ledger total {total} disagrees with traces ({traced}) or call counts ({})",
            run.ledger.recompute(&zoo)
        ))));
    }
    let metrics = evaluate(&run, cohort)?;
    io::ensure_dir(&a.traces)?;
    io::write_traces(&a.traces.join("traces.csv"), &run)?;
    let calls: Vec<_> = zoo.models().zip(&run.ledger.model_calls).map(|(m, n)| json!({ "model_id": m.id, "calls": n })).collect();
    io::write_json(
        &a.traces.join("ledger.json"),
        &json!({
            "model_calls": calls,
            "dkd_calls": run.ledger.dkd_calls,
            "model_cost": run.ledger.model_cost.units(),
            "dkd_cost": run.ledger.dkd_cost.units(),
            "total_cost": total.units(),
            "timesteps": run.timesteps(),
        }),
    )?;
    io::write_json(&a.traces.join("metrics.json"), &json!({ "mode": a.mode, "episodes": cohort.len(), "metrics": metrics }))?;
    echo_config(&a.traces, command)?;
    let early = metrics.earliness.mean.map_or("n/a".to_string(), |m| format!("{m:.2}"));
    println!(
        "{} episodes, {} timesteps: AUC {:.4}, cost per call {:.4}, total cost {}, mean early steps {early}",
        cohort.len(),
        metrics.timesteps,
        metrics.auc,
        metrics.cost_per_call,
        total
    );
    Ok(())
}

fn point_json(p: &TradeoffPoint) -> serde_json::Value {
    json!({ "budget": p.budget, "cost_per_call": p.cost, "auc": p.auc, "policy": p.policy })
}

fn cmd_sweep(a: &SweepArgs, command: &Command) -> Result<()> {
    if a.budgets.is_empty() {
        return Err(usage("--budgets needs at least one value"));
    }
    if a.opts.budget_split == SplitRule::Explicit {
        return Err(usage("sweep divides each budget itself; use --budget-split equal or proportional"));
    }
    let modes: Vec<GateMode> = match a.gating {
        SweepGating::Hard => vec![GateMode::Hard],
        SweepGating::Soft => vec![GateMode::Soft],
        SweepGating::Both => vec![GateMode::Hard, GateMode::Soft],
    };
    let (zoo, scores, cohorts) = load_data(&a.zoo, &a.scores, &[&a.train_cohort, &a.test_cohort])?;
    let (train, test) = (&cohorts[0], &cohorts[1]);
    let (nets, distilled) = if modes.contains(&GateMode::Soft) {
        let all = Cohort::new(zoo.stage_count(), train.episodes().iter().chain(test.episodes()).cloned().collect())?;
        surrogates(&a.opts, &zoo, &all)?
    } else {
        (Vec::new(), Vec::new())
    };
    let bench = Bench { zoo: &zoo, scores: &scores, train, test, distilled: &distilled, mode: a.mode };
    let policy_dir = a.out.join("policies");
    io::ensure_dir(&policy_dir)?;

    let base_config = train_config(&a.opts, GateMode::Hard, 0.0)?;
    let (base_policy, base_eval) = bench.baseline(&base_config)?;
    io::write_json(&policy_dir.join("baseline.json"), &base_policy)?;
    println!("baseline (most expensive model per stage): AUC {:.4}, cost per call {:.4}", base_eval.auc, base_eval.cost_per_call);

    let mut summaries = Vec::new();
    for mode in modes {
        let config = train_config(&a.opts, mode, 0.0)?;
        let mut outcome = sweep(&a.budgets, &config, &bench)?;
        for (i, entry) in outcome.entries.iter_mut().enumerate() {
            let name = format!("{mode}-{}.json", i + 1);
            attach_surrogates(&mut entry.policy, &nets, &policy_dir)?;
            io::write_json(&policy_dir.join(&name), &entry.policy)?;
            entry.point.policy = Some(format!("policies/{name}"));
        }
        let points = outcome.points();
        io::write_points(&a.out.join(format!("points_{mode}.csv")), &points)?;
        for (budget, msg) in &outcome.failures {
            eprintln!("warning: {mode} budget {budget} failed: {msg}");
        }
        let recommended = outcome.recommended.map(|i| point_json(&points[i]));
        println!("{mode}: hull area {:.4} over {} points", outcome.hull_area, points.len());
        for e in &outcome.entries {
            println!("  budget {:>10}  cost per call {:>10.4}  AUC {:.4}", e.point.budget, e.point.cost, e.point.auc);
        }
        if let Some(i) = outcome.recommended {
            println!("  recommended: budget {} (AUC {:.4}, cost per call {:.4})", points[i].budget, points[i].auc, points[i].cost);
        }
        summaries.push(json!({
            "gating": mode,
            "hull_area": outcome.hull_area,
            "recommended": recommended,
            "points": outcome.entries.iter().map(|e| json!({
                "budget": e.point.budget,
                "cost_per_call": e.point.cost,
                "auc": e.point.auc,
                "policy": e.point.policy,
                "earliness_mean": e.evaluation.earliness.mean,
                "skipped_pairs": e.evaluation.skipped_pairs,
            })).collect::<Vec<_>>(),
            "failures": outcome.failures.iter().map(|(b, m)| json!({ "budget": b, "error": m })).collect::<Vec<_>>(),
        }));
    }
    io::write_json(
        &a.out.join("summary.json"),
        &json!({
            "units": {
                "cost_per_call": "cost units per processed timestep",
                "auc": "one-vs-one AUC in [0, 1]",
                "hull_area": "convex hull area in (cost per call) x (AUC x 100)",
            },
            "mode": a.mode,
            "train_episodes": train.len(),
            "test_episodes": test.len(),
            "baseline": {
                "cost_per_call": base_eval.cost_per_call,
                "auc": base_eval.auc,
                "policy": "policies/baseline.json",
            },
            "sweeps": summaries,
        }),
    )?;
    echo_config(&a.out, command)
}

fn cmd_report(a: &ReportArgs, command: &Command) -> Result<()> {
    let mut sections = Vec::new();
    for mode in [GateMode::Hard, GateMode::Soft] {
        let path = a.input.join(format!("points_{mode}.csv"));
        if !path.exists() {
            continue;
        }
        let points = io::read_points(&path)?;
        let area = tradeoff_hull_area(&points);
        let rec = recommend(&points);
        println!("{mode}: {} points, hull area {area:.4}", points.len());
        for p in &points {
            let mark = if rec.is_some_and(|i| std::ptr::eq(&points[i], p)) { "  <- recommended" } else { "" };
            println!("  budget {:>10}  cost per call {:>10.4}  AUC {:.4}{mark}", p.budget, p.cost, p.auc);
        }
        sections.push(json!({
            "gating": mode,
            "hull_area": area,
            "recommended": rec.map(|i| point_json(&points[i])),
            "points": points.iter().map(point_json).collect::<Vec<_>>(),
        }));
    }
    if sections.is_empty() {
        return Err(Error::Core(unfold_core::Error::Validation(format!(
            "{}: no points_hard.csv or points_soft.csv found",
            a.input.display()
        ))));
    }
    let summary = a.input.join("summary.json");
    let baseline = if summary.exists() {
        let s: serde_json::Value = io::read_json(&summary)?;
        s.get("baseline").cloned()
    } else {
        None
    };
    if let Some(b) = &baseline {
        println!("baseline: AUC {}, cost per call {}", b["auc"], b["cost_per_call"]);
    }
    if let Some(out) = &a.out {
        io::ensure_dir(out)?;
        io::write_json(&out.join("report.json"), &json!({ "baseline": baseline, "sweeps": sections }))?;
        echo_config(out, command)?;
    }
    Ok(())
}
