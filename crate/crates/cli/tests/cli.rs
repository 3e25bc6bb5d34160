use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn triformer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triformer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY: &str = "\
# tiny synthetic run
data.synth.n = 3
data.synth.t = 300
data.synth.seed = 4
model.h = 12
model.f = 2
model.patch_sizes = 3,2,2
model.d = 4
model.m = 5
model.a = 2
train.lr = 0.003
train.batch = 16
train.max_epochs = 2
";

fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    let text = format!("{TINY}out.dir = {}\n{extra}", dir.join("out").display());
    fs::write(&path, text).unwrap();
    path
}

fn train(dir: &Path, extra: &str) -> Output {
    let cfg = tiny_config(dir, extra);
    triformer(&["train", "--config", cfg.to_str().unwrap()])
}

fn history(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/history.json")).unwrap()).unwrap()
}

fn strip_times(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_seconds");
    v.as_object_mut().unwrap().remove("checkpoint");
    for e in v["epochs"].as_array_mut().unwrap() {
        e.as_object_mut().unwrap().remove("wall_seconds");
    }
    v
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = train(a.path(), "");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["checkpoint.bin", "history.json", "config.resolved"] {
        assert!(a.path().join("out").join(f).exists(), "{f}");
    }
    let h = history(a.path());
    for key in ["epochs", "best_epoch", "metrics", "wall_seconds"] {
        assert!(h.get(key).is_some(), "{key}");
    }
    assert_eq!(code(&train(b.path(), "")), 0);
    assert_eq!(strip_times(history(a.path())), strip_times(history(b.path())));

    let resolved = fs::read_to_string(a.path().join("out/config.resolved")).unwrap();
    assert!(resolved.contains("model.patch_sizes = 3,2,2"));
    assert!(resolved.contains("train.lr = 0.003"));
}

#[test]
fn divisibility_violation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "model.patch_sizes = 5,2\n");
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("divisibility"), "{}", stderr(&out));
}

#[test]
fn unknown_keys_and_bad_overrides_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train(dir.path(), "model.depth = 3\n")), 2);
    let cfg = tiny_config(dir.path(), "");
    let out = triformer(&["train", "--config", cfg.to_str().unwrap(), "--set", "model.vsm=heavy"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn data_problems_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = format!("data.path = {}\n", dir.path().join("nope.csv").display());
    assert_eq!(code(&train(dir.path(), &missing)), 3);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,x\n").unwrap();
    let out = train(dir.path(), &format!("data.path = {}\n", bad.display()));
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));
}

#[test]
fn eval_reproduces_the_best_validation_metrics() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train(dir.path(), "")), 0);
    let cfg = dir.path().join("out/config.resolved");
    let ckpt = dir.path().join("out/checkpoint.bin");
    let metrics_path = dir.path().join("val.json");
    let out = triformer(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--split",
        "val",
        "--out",
        metrics_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m: Value = serde_json::from_str(&fs::read_to_string(&metrics_path).unwrap()).unwrap();
    let h = history(dir.path());
    for key in ["mse", "mae"] {
        let got = m[key].as_f64().unwrap();
        let want = h["metrics"][key].as_f64().unwrap();
        assert!((got - want).abs() < 1e-12, "{key}: {got} vs {want}");
    }
    assert!(m["persistence"]["mse"].as_f64().is_some());
    assert!(String::from_utf8_lossy(&out.stdout).contains("persistence"));
}

#[test]
fn eval_rejects_mismatched_variable_count() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train(dir.path(), "")), 0);
    let cfg = tiny_config(dir.path(), "data.synth.n = 5\n");
    let ckpt = dir.path().join("out/checkpoint.bin");
    let out = triformer(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn memories_export_exactly() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train(dir.path(), "")), 0);
    let ckpt = dir.path().join("out/checkpoint.bin");
    let csv = dir.path().join("mem.csv");
    let out = triformer(&["export-memories", "--checkpoint", ckpt.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0].split(',').count(), 5);
    let exported: Vec<f64> = lines[1..]
        .iter()
        .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()))
        .collect();
    let model = triformer_core::model::load_checkpoint(&ckpt).unwrap();
    let stored = model.params().value(model.memory().unwrap().memory);
    assert_eq!(stored.shape(), &[3, 5]);
    assert!(exported.iter().zip(stored.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn exporting_from_a_shared_projection_model_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train(dir.path(), "model.vsm = off\ntrain.max_epochs = 1\n")), 0);
    let ckpt = dir.path().join("out/checkpoint.bin");
    let csv = dir.path().join("mem.csv");
    let out = triformer(&["export-memories", "--checkpoint", ckpt.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no memories in checkpoint"));
}

#[test]
fn bench_writes_two_rows_per_lookback() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = triformer(&[
        "bench", "--h", "256,512,1024", "--repetitions", "1", "--d", "8", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(text.lines().next().unwrap(), "h,mechanism,median_seconds,attention_score_count");

    let cfg = triformer_core::scaling::bench_config(256, 1, 8).unwrap();
    let probe = triformer_core::model::complexity_probe(&cfg).unwrap();
    let patch_256 = rows.iter().find(|r| r[0] == "256" && r[1] == "patch").unwrap();
    assert_eq!(patch_256[3].parse::<u64>().unwrap(), probe.attention_score_count);
    let canon: Vec<u64> = rows.iter().filter(|r| r[1] == "canonical").map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(canon, vec![65_536, 262_144, 1_048_576]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope"));
}

#[test]
fn bench_rejects_lookbacks_outside_the_depth_policy() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = triformer(&["bench", "--h", "100", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn synth_writes_a_loadable_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let args = ["synth", "--n", "4", "--t", "50", "--seed", "3", "--heterogeneity", "0.5", "--out", csv.to_str().unwrap()];
    assert_eq!(code(&triformer(&args)), 0);
    let table = triformer_core::data::load_csv(&csv).unwrap();
    assert_eq!((table.rows(), table.n_vars()), (50, 4));
    assert_eq!(table, triformer_core::data::synth(4, 50, 3, 0.5));
    let bad = triformer(&["synth", "--n", "0", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&bad), 2);
}
