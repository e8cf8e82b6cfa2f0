use std::ffi::OsStr;
use std::fmt::Debug;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::Parser;
use reach_surrogate::checkpoint::Checkpoint;
use reach_surrogate::cli::{train_on, Cli, Command as Sub};
use reach_surrogate::dataset::{load_state, Dataset, Role};
use reach_surrogate_core::model::ModelConfig;
use reach_surrogate_core::rollout::{rollout, RolloutConfig};
use reach_surrogate_core::train::TrainConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reach-surrogate"))
}

fn run<S: AsRef<OsStr> + Debug>(args: &[S]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok<S: AsRef<OsStr> + Debug>(args: &[S]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path) {
    ok(&["gen-data", "--seed", "3", "--n-xs", "8", "--hours", "120", "--out", s(dir)]);
}

const TRAIN: [&str; 10] = [
    "--epochs", "2", "--hidden", "4", "--max-modes", "3", "--batch-size", "8", "--seed", "5",
];

fn train(data: &Path, ck: &Path, extra: &[&str]) {
    let mut args = vec!["train", "--dataset", s(data), "--checkpoint", s(ck)];
    args.extend(TRAIN);
    args.extend(extra);
    ok(&args);
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let b = fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), b)
        })
        .collect();
    v.sort();
    v
}

#[test]
fn gen_data_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a);
    gen(&b);
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 8);
    assert_eq!(fa, fb);
}

#[test]
fn evaluate_truth_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path());
    let truth = tmp.path().join("test.truth.csv");
    let out = ok(&["evaluate", "--pred", s(&truth), "--truth", s(&truth)]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["stage"]["nse"], 1.0);
    assert_eq!(json["discharge"]["nse"], 1.0);
    assert_eq!(json["stage"]["rmse"], 0.0);

    let report = tmp.path().join("report");
    ok(&["evaluate", "--pred", s(&truth), "--truth", s(&truth), "--out", s(&report)]);
    for f in ["metrics.json", "error_distribution.csv", "per_xs_nse.csv"] {
        assert!(report.join(f).is_file(), "{f}");
    }
}

#[test]
fn training_defaults() {
    let cli = Cli::try_parse_from(["reach-surrogate", "train", "--dataset", "d", "--checkpoint", "c"]).unwrap();
    let Sub::Train(t) = cli.command else { panic!("not train") };
    assert_eq!(t.train.epochs, 60);
    assert_eq!(t.train.lr, 2e-4);
    assert_eq!(t.train.batch_size, 16);
    assert_eq!(t.train.val_fraction, 0.2);
    assert_eq!(t.train.lambda_smooth, 0.0);
    assert_eq!(t.train.hidden, 96);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let missing = run(&["evaluate", "--pred", "/nonexistent/p.csv", "--truth", "/nonexistent/t.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("does not exist"));
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data);
    let ck = tmp.path().join("model.ckpt");
    train(&data, &ck, &["--out", s(tmp.path())]);
    assert_eq!(fs::read_to_string(tmp.path().join("train_report.jsonl")).unwrap().lines().count(), 2);

    let loaded = Checkpoint::load(&ck).unwrap();
    let again = tmp.path().join("again.ckpt");
    loaded.save(&again).unwrap();
    assert_eq!(fs::read(&ck).unwrap(), fs::read(&again).unwrap());
    assert_eq!(Checkpoint::load(&again).unwrap(), loaded);

    let bytes = fs::read(&ck).unwrap();
    let cut = tmp.path().join("cut.ckpt");
    fs::write(&cut, &bytes[..bytes.len() - 100]).unwrap();
    assert!(Checkpoint::load(&cut).is_err());
    let out = run(&[
        "rollout",
        "--checkpoint",
        s(&cut),
        "--geometry",
        s(&data.join("geometry.txt")),
        "--forcings",
        s(&data.join("test.forcings.csv")),
        "--warmup",
        s(&data.join("test.truth.csv")),
        "--out",
        s(&tmp.path().join("pred.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
    assert!(!tmp.path().join("pred.csv").exists());
}

fn rollout_args(data: &Path, ck: &Path, out: &Path) -> Vec<String> {
    let f = |p: &Path| s(p).to_string();
    vec![
        "rollout".into(),
        "--checkpoint".into(),
        f(ck),
        "--geometry".into(),
        f(&data.join("geometry.txt")),
        "--forcings".into(),
        f(&data.join("test.forcings.csv")),
        "--warmup".into(),
        f(&data.join("test.truth.csv")),
        "--horizon".into(),
        "8".into(),
        "--out".into(),
        f(out),
    ]
}

#[test]
fn ablated_checkpoint_requires_matching_mask() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data);
    let ck = tmp.path().join("abl.ckpt");
    train(&data, &ck, &["--drop-channels", "z_bank,n_man"]);
    assert_eq!(
        Checkpoint::load(&ck).unwrap().model.config.mask.dropped().len(),
        2
    );
    let pred = tmp.path().join("pred.csv");
    let out = run(&rollout_args(&data, &ck, &pred));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mask"));
    let mut args = rollout_args(&data, &ck, &pred);
    args.extend(["--drop-channels".to_string(), "n_man,z_bank".to_string()]);
    ok(&args);
    assert!(pred.is_file());
}

#[test]
fn rollout_from_checkpoint_matches_in_process_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data);
    let ck = tmp.path().join("model.ckpt");
    train(&data, &ck, &[]);
    let pred_path = tmp.path().join("pred.csv");
    ok(&rollout_args(&data, &ck, &pred_path));

    let ds = Dataset::read(&data).unwrap();
    let model_cfg = ModelConfig {
        hidden: 4,
        max_modes: 3,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        seed: 5,
        ..TrainConfig::default()
    };
    let model = train_on(&ds, model_cfg, cfg, false).unwrap();
    assert_eq!(model.params, Checkpoint::load(&ck).unwrap().model.params);
    let test = ds.role(Role::Test).next().unwrap();
    let warm = test.truth.slice(0, 12);
    let in_process = rollout(
        &model,
        &ds.reach,
        &test.forcings,
        &warm,
        &RolloutConfig::new(8, 12, ds.reach.id.clone()),
    )
    .unwrap();
    let from_file = load_state(&pred_path, &ds.reach.id).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&from_file.h), bits(&in_process.h));
    assert_eq!(bits(&from_file.q), bits(&in_process.q));
}

#[test]
fn float32_checkpoints_round_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data);
    let ck = tmp.path().join("f32.ckpt");
    train(&data, &ck, &["--float32"]);
    let loaded = Checkpoint::load(&ck).unwrap();
    assert!(loaded.float32);
    for t in loaded.model.params.tensors() {
        assert!(t.data().iter().all(|&v| v == v as f32 as f64));
    }
}

#[test]
fn bench_reports_every_reach_and_a_total() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&[
        "bench", "--reaches", "2", "--n-xs", "6", "--hours", "80", "--hidden", "4", "--horizon", "24", "--out",
        s(tmp.path()),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("TOTAL"));
    assert!(text.contains("speedup"));
    let csv = fs::read_to_string(tmp.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
