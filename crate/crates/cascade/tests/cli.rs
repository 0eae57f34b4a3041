use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::CommandFactory;
use serde_json::Value;
use unfold_cascade::cli::{main_with, Cli};
use unfold_cascade::{io, Error};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unfold-cascade")).args(args).output().expect("spawn unfold-cascade")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn every_flag_is_documented() {
    let mut cmd = Cli::command();
    cmd.build();
    for sub in cmd.get_subcommands() {
        assert!(sub.get_about().is_some(), "{} has no description", sub.get_name());
        for arg in sub.get_arguments() {
            if matches!(arg.get_id().as_str(), "help" | "version") {
                continue;
            }
            assert!(arg.get_help().is_some(), "{} --{} has no help text", sub.get_name(), arg.get_id());
        }
    }
}

#[test]
fn help_exits_zero() {
    for sub in ["gen", "train-dkd", "train", "simulate", "sweep", "report"] {
        assert_eq!(main_with(["unfold-cascade", sub, "--help"]), 0, "{sub}");
    }
    assert_eq!(main_with(["unfold-cascade", "--help"]), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(main_with(["unfold-cascade"]), 1);
    assert_eq!(main_with(["unfold-cascade", "bogus"]), 1);
    assert_eq!(main_with(["unfold-cascade", "gen"]), 1);
    assert_eq!(main_with(["unfold-cascade", "gen", "--out", "x", "--seed", "minus"]), 1);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // a ladder shape next to an explicit zoo is contradictory
    assert_eq!(main_with(["unfold-cascade", "gen", "--out", s(&out), "--zoo", "z.csv", "--stages", "2"]), 1);
    let code = bin(&["sweep", "--zoo", "z", "--scores", "s", "--train-cohort", "a", "--test-cohort", "b", "--budgets", "", "--out", s(&out)])
        .status
        .code();
    assert_eq!(code, Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&[
        "train", "--zoo", "/nonexistent/zoo.csv", "--scores", "s.csv", "--cohort", "c.csv", "--out", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/zoo.csv"));
}

#[test]
fn error_classes_map_to_exit_codes() {
    use unfold_core::Error as Core;
    assert_eq!(Error::Usage("x".into()).exit_code(), 1);
    assert_eq!(Error::Core(Core::Usage("x".into())).exit_code(), 1);
    assert_eq!(Error::Core(Core::Validation("x".into())).exit_code(), 2);
    assert_eq!(Error::Core(Core::Coverage("x".into())).exit_code(), 2);
    assert_eq!(Error::Core(Core::Integrity("x".into())).exit_code(), 2);
    assert_eq!(Error::Core(Core::Numerical("x".into())).exit_code(), 3);
    let row = Error::Row { path: "a.csv".into(), line: 4, source: Core::Numerical("x".into()) };
    assert_eq!(row.exit_code(), 3);
    assert!(row.to_string().starts_with("a.csv:4:"));
}

/// A small generated data set shared by the pipeline tests.
struct Pipeline {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Pipeline {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&[
            "gen", "--n-episodes", "300", "--min-len", "8", "--max-len", "16", "--auc-tolerance", "0.05",
            "--out", s(&root.join("data")),
        ]);
        Pipeline { _dir: dir, root }
    }

    fn data(&self, name: &str) -> String {
        self.root.join("data").join(name).to_str().unwrap().to_string()
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn train_dkd(&self) -> PathBuf {
        let out = self.path("dkd");
        if !out.join("dkd_stage2.json").exists() {
            ok(&[
                "train-dkd", "--zoo", &self.data("zoo.csv"), "--scores", &self.data("scores.csv"),
                "--features", &self.data("features.csv"), "--cohort", &self.data("train_cohort.csv"),
                "--hidden", "8", "--epochs", "5", "--out", s(&out),
            ]);
        }
        out
    }

    fn simulate(&self, policy: &Path, cohort: &str, mode: &str, out: &str) -> PathBuf {
        let out = self.path(out);
        ok(&[
            "simulate", "--policy", s(policy), "--zoo", &self.data("zoo.csv"), "--scores", &self.data("scores.csv"),
            "--cohort", &self.data(cohort), "--features", &self.data("features.csv"), "--mode", mode,
            "--traces", s(&out),
        ]);
        out
    }
}

fn assert_config(dir: &Path, command: &str) {
    let v: Value = io::read_json(&dir.join("config.json")).unwrap();
    assert_eq!(v["tool"], "unfold-cascade");
    assert!(v["command"].get(command).is_some(), "{dir:?}: {v}");
}

#[test]
fn gen_writes_every_table_and_is_seeded() {
    let p = Pipeline::new();
    for name in ["zoo.csv", "cohort.csv", "train_cohort.csv", "test_cohort.csv", "scores.csv", "features.csv", "gen_report.json"] {
        assert!(p.path("data").join(name).exists(), "{name}");
    }
    assert_config(&p.path("data"), "gen");
    let again = p.path("again");
    ok(&["gen", "--n-episodes", "300", "--min-len", "8", "--max-len", "16", "--auc-tolerance", "0.05", "--out", s(&again)]);
    for name in ["scores.csv", "cohort.csv", "features.csv"] {
        assert_eq!(fs::read(p.path("data").join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
    let zoo = io::read_zoo(&p.path("data/zoo.csv")).unwrap();
    let train = io::read_cohort(&p.path("data/train_cohort.csv"), zoo.stage_count()).unwrap();
    let test = io::read_cohort(&p.path("data/test_cohort.csv"), zoo.stage_count()).unwrap();
    assert_eq!(train.len() + test.len(), 300);
    assert_eq!(train.len(), 60);
}

#[test]
fn train_simulate_and_report() {
    let p = Pipeline::new();
    let dkd = p.train_dkd();
    assert_config(&dkd, "train-dkd");
    let report: Value = io::read_json(&dkd.join("dkd_report.json")).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 2);

    for gating in ["hard", "soft"] {
        let out = p.path(&format!("train-{gating}"));
        let stdout = ok(&[
            "train", "--zoo", &p.data("zoo.csv"), "--scores", &p.data("scores.csv"), "--cohort", &p.data("train_cohort.csv"),
            "--gating", gating, "--budget", "40", "--epochs", "10", "--dkd", s(&dkd), "--features", &p.data("features.csv"),
            "--out", s(&out),
        ]);
        assert!(stdout.contains("stage 1"), "{stdout}");
        assert!(out.join("policy.json").exists() && out.join("train_report.json").exists());
        assert_config(&out, "train");
        if gating == "soft" {
            assert!(out.join("dkd_stage1.json").exists(), "surrogates travel with the policy");
        }

        let sim = p.simulate(&out.join("policy.json"), "test_cohort.csv", "streaming", &format!("sim-{gating}"));
        assert_config(&sim, "simulate");
        let metrics: Value = io::read_json(&sim.join("metrics.json")).unwrap();
        let auc = metrics["metrics"]["auc"].as_f64().unwrap();
        let cost = metrics["metrics"]["cost_per_call"].as_f64().unwrap();
        assert!(auc.is_finite() && (0.0..=1.0).contains(&auc), "{metrics}");
        assert!(cost.is_finite() && cost > 0.0, "{metrics}");
        let ledger: Value = io::read_json(&sim.join("ledger.json")).unwrap();
        let traced: f64 = io::read_traces(&sim.join("traces.csv")).unwrap().iter().map(|(_, r)| r.cost.units()).sum();
        assert!((traced - ledger["total_cost"].as_f64().unwrap()).abs() < 1e-6);

        // the same inputs give byte-identical traces
        let again = p.simulate(&out.join("policy.json"), "test_cohort.csv", "streaming", &format!("sim-{gating}-again"));
        assert_eq!(fs::read(sim.join("traces.csv")).unwrap(), fs::read(again.join("traces.csv")).unwrap());
    }
}

#[test]
fn one_shot_resolves_each_episode_at_its_first_timestep() {
    let p = Pipeline::new();
    let out = p.path("train");
    ok(&[
        "train", "--zoo", &p.data("zoo.csv"), "--scores", &p.data("scores.csv"), "--cohort", &p.data("train_cohort.csv"),
        "--budget", "60", "--out", s(&out),
    ]);
    let sim = p.simulate(&out.join("policy.json"), "test_cohort.csv", "one-shot", "oneshot");
    let traces = io::read_traces(&sim.join("traces.csv")).unwrap();
    assert!(traces.iter().all(|(_, r)| r.t == 1));
    let metrics: Value = io::read_json(&sim.join("metrics.json")).unwrap();
    assert_eq!(metrics["mode"], "one-shot");
    assert_eq!(metrics["metrics"]["timesteps"].as_u64().unwrap(), metrics["episodes"].as_u64().unwrap());
}

#[test]
fn sweep_then_report() {
    let p = Pipeline::new();
    let dkd = p.train_dkd();
    let out = p.path("sweep");
    ok(&[
        "sweep", "--zoo", &p.data("zoo.csv"), "--scores", &p.data("scores.csv"), "--train-cohort", &p.data("train_cohort.csv"),
        "--test-cohort", &p.data("test_cohort.csv"), "--budgets", "6,24,96,384", "--epochs", "20", "--dkd", s(&dkd),
        "--features", &p.data("features.csv"), "--out", s(&out),
    ]);
    assert_config(&out, "sweep");
    assert!(out.join("policies/baseline.json").exists());
    for gating in ["hard", "soft"] {
        let points = io::read_points(&out.join(format!("points_{gating}.csv"))).unwrap();
        assert_eq!(points.len(), 4);
        for pt in &points {
            assert!(pt.auc.is_finite() && pt.cost.is_finite());
            let policy = out.join(pt.policy.as_deref().unwrap());
            assert!(policy.exists(), "{policy:?}");
        }
    }
    let summary: Value = io::read_json(&out.join("summary.json")).unwrap();
    assert_eq!(summary["sweeps"].as_array().unwrap().len(), 2);
    assert!(summary["baseline"]["auc"].as_f64().unwrap() > 0.5);

    // a sweep policy can be replayed on its own
    let swept = io::read_points(&out.join("points_hard.csv")).unwrap()[0].clone();
    let sim = p.simulate(&out.join(swept.policy.as_deref().unwrap()), "test_cohort.csv", "streaming", "replay");
    let metrics: Value = io::read_json(&sim.join("metrics.json")).unwrap();
    assert!((metrics["metrics"]["auc"].as_f64().unwrap() - swept.auc).abs() < 1e-12);

    let rep = p.path("report");
    let stdout = ok(&["report", "--input", s(&out), "--out", s(&rep)]);
    assert!(stdout.contains("recommended") && stdout.contains("baseline"), "{stdout}");
    let report: Value = io::read_json(&rep.join("report.json")).unwrap();
    assert_eq!(report["sweeps"].as_array().unwrap().len(), 2);
    assert_config(&rep, "report");

    let empty = p.path("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(bin(&["report", "--input", s(&empty)]).status.code(), Some(2));
}

#[test]
fn soft_policy_without_features_is_a_usage_error() {
    let p = Pipeline::new();
    let dkd = p.train_dkd();
    let out = p.path("soft");
    ok(&[
        "train", "--zoo", &p.data("zoo.csv"), "--scores", &p.data("scores.csv"), "--cohort", &p.data("train_cohort.csv"),
        "--gating", "soft", "--epochs", "5", "--dkd", s(&dkd), "--features", &p.data("features.csv"), "--out", s(&out),
    ]);
    let res = bin(&[
        "simulate", "--policy", s(&out.join("policy.json")), "--zoo", &p.data("zoo.csv"), "--scores", &p.data("scores.csv"),
        "--cohort", &p.data("test_cohort.csv"), "--traces", s(&p.path("sim")),
    ]);
    assert_eq!(res.status.code(), Some(1));
}
