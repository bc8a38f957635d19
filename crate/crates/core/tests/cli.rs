use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use actionwords::report::Report;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actionwords")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) {
    ok(&["synth", "--seed", "7", "--classes", "4", "--train-per-class", "8", "--test-per-class", "4", "--out", s(dir)]);
}

#[test]
fn synth_train_eval_gives_a_ten_point_curve() {
    let t = tempfile::tempdir().unwrap();
    let (d, m) = (t.path().join("d"), t.path().join("m"));
    synth(&d);
    ok(&["train", "--model", "tcnn", "--data", s(&d), "--out", s(&m), "--epochs", "2", "--filters", "4", "--hidden", "8"]);
    for f in ["model.ckpt", "history.csv", "report.json"] {
        assert!(m.join(f).exists(), "{f}");
    }
    let out = bin(&["eval", "--model", s(&m), "--data", s(&d), "--curve"]);
    assert!(out.status.success());
    let r = Report::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(r.curve.unwrap().accuracy.len(), 10);
    assert!(!r.metrics.contains_key("wall_clock_seconds"));

    let out = bin(&["eval", "--model", s(&m), "--data", s(&d), "--curve", "--format", "csv", "--timing"]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("metric,fraction,value\n"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("curve,")).count(), 10);
    assert!(csv.contains("wall_clock_seconds,,"));

    let out = bin(&["predict", "--model", s(&m), "--data", s(&d), "--tenths", "5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 16);
}

#[test]
fn unknown_flag_is_a_usage_error_and_writes_nothing() {
    let t = tempfile::tempdir().unwrap();
    let out = bin(&["synth", "--out", s(&t.path().join("d")), "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let line: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(line["error"], "Usage");
    assert_eq!(fs::read_dir(t.path()).unwrap().count(), 0);
}

#[test]
fn missing_input_is_a_data_error() {
    let t = tempfile::tempdir().unwrap();
    let out = bin(&["train", "--data", s(&t.path().join("none")), "--out", s(t.path())]);
    assert_eq!(out.status.code(), Some(3));
    let line: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(line["message"].is_string());
}

#[test]
fn invalid_tunable_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    synth(&d);
    let out = bin(&["train", "--data", s(&d), "--out", s(t.path()), "--dropout", "1.5,0.2"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical_and_inputs_untouched() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    synth(&d);
    let before = fs::read(d.join("train.jsonl")).unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let m = t.path().join(run);
        ok(&["--seed", "3", "train", "--data", s(&d), "--out", s(&m), "--epochs", "2", "--filters", "4", "--hidden", "8"]);
        reports.push((fs::read(m.join("report.json")).unwrap(), fs::read(m.join("model.ckpt")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(before, fs::read(d.join("train.jsonl")).unwrap());
    let d2 = t.path().join("d2");
    synth(&d2);
    assert_eq!(before, fs::read(d2.join("train.jsonl")).unwrap());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    synth(&d);
    let cfg = t.path().join("run.cfg");
    fs::write(&cfg, "# small run\nepochs = 1\nfilters = 4\nhidden = 8\nmasked = true\n").unwrap();
    let m = t.path().join("m");
    ok(&["--config", s(&cfg), "train", "--data", s(&d), "--out", s(&m), "--epochs", "2"]);
    let history = fs::read_to_string(m.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
}

#[test]
fn feature_pipeline_runs_end_to_end() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("d");
    synth(&d);
    let train = d.join("features/train.jsonl");
    let test = d.join("features/test.jsonl");
    let p = |n: &str| t.path().join(n);
    ok(&["ingest", "--manifest", s(&train), "--out", s(&p("ing")), "--stem", "train"]);
    ok(&["pca", "--features", s(&p("ing/train.jsonl")), "--dim", "8", "--out", s(&p("pca.bin"))]);
    ok(&[
        "fuse", "--temporal", s(&train), "--spatial", s(&train), "--pca-temporal", s(&p("pca.bin")),
        "--pca-spatial", s(&p("pca.bin")), "--ratio", "0.5", "--dim", "8", "--out", s(&p("fused")),
    ]);
    ok(&["codebook", "--features", s(&p("fused/fused.jsonl")), "--k", "12", "--out", s(&p("cb.bin"))]);
    ok(&["codebook", "--features", s(&train), "--k", "12", "--out", s(&p("cb_raw.bin"))]);
    for mode in ["ha", "sa", "da"] {
        let out = p(&format!("enc_{mode}"));
        ok(&["encode", "--train", s(&train), "--test", s(&test), "--mode", mode, "--codebook", s(&p("cb_raw.bin")), "--out", s(&out)]);
        for f in ["train.jsonl", "test.jsonl", "table.bin"] {
            assert!(out.join(f).exists(), "{mode} {f}");
        }
    }
    let m = p("m");
    ok(&["train", "--model", "clstm", "--data", s(&p("enc_ha")), "--out", s(&m), "--epochs", "1", "--filters", "4", "--hidden", "4,4"]);
}

#[test]
fn ratio_and_report_conversion() {
    let t = tempfile::tempdir().unwrap();
    let flow = t.path().join("flow.txt");
    fs::write(&flow, "0\n0\n10\n10\n").unwrap();
    let json = t.path().join("r.json");
    ok(&["ratio", "--flow", s(&flow), "--mode", "half-mu-under", "--out", s(&json)]);
    let r = Report::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(r.metrics["ratio"], 0.5);
    assert_eq!(r.metrics["mu_all"], 5.0);

    let csv = t.path().join("r.csv");
    ok(&["report", "--input", s(&json), "--format", "csv", "--out", s(&csv)]);
    let back = t.path().join("back.json");
    ok(&["report", "--input", s(&csv), "--out", s(&back)]);
    let again = Report::from_json(&fs::read_to_string(&back).unwrap()).unwrap();
    assert_eq!(again.metrics, r.metrics);
}
