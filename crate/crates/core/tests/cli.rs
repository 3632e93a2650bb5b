use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use beamkit::nn::{BeamformerVariant, HeadConfig, PipelineConfig, TcnConfig};

fn beamkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamkit"))
        .args(args)
        .env("BEAMKIT_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = beamkit(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, count: &str, seed: &str) {
    let cfg = dir.join("sim.json");
    fs::write(&cfg, r#"{ "duration_s": 0.4 }"#).unwrap();
    ok(&["simulate", "--config", p(&cfg), "--count", count, "--seed", seed, "--out", p(&dir.join("data"))]);
}

/// Mean SI-SDR per method from `scores.csv`.
fn method_mean(scores: &str, method: &str) -> f64 {
    let vals: Vec<f64> = scores
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1] == method).then(|| f[3].parse().unwrap())
        })
        .collect();
    assert!(!vals.is_empty(), "{method} missing");
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    simulate(a.path(), "3", "9");
    simulate(b.path(), "3", "9");
    for f in ["manifest.json", "geometry.json"] {
        assert_eq!(
            fs::read(a.path().join("data").join(f)).unwrap(),
            fs::read(b.path().join("data").join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("data/manifest.json")).unwrap()).unwrap();
    let entries = manifest.as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for e in entries {
        let mix = e["mixture_path"].as_str().unwrap();
        assert_eq!(
            fs::read(a.path().join("data").join(mix)).unwrap(),
            fs::read(b.path().join("data").join(mix)).unwrap()
        );
    }
}

#[test]
fn oracle_td_mcwf_beats_fd_mcwf_and_eval_rescores() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "4", "1");
    let data = dir.path().join("data/manifest.json");
    let out = dir.path().join("oracle");
    ok(&[
        "oracle-bf", "--data", p(&data), "--method", "td-eq-mcwf", "--method", "fd-eq-mcwf", "--method", "ibm",
        "--oracle", "--out", p(&out),
    ]);
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    let td = method_mean(&scores, "td-eq-mcwf");
    let fd = method_mean(&scores, "fd-eq-mcwf");
    assert!(td - fd >= 15.0, "td {td} fd {fd}");

    // Re-scoring the written estimates reproduces the scores up to the
    // float32 WAV quantisation.
    let rescored = dir.path().join("eval");
    ok(&["eval", "--data", p(&data), "--estimates", p(&out), "--method", "ibm", "--out", p(&rescored)]);
    let again = fs::read_to_string(rescored.join("scores.csv")).unwrap();
    assert!((method_mean(&again, "ibm") - method_mean(&scores, "ibm")).abs() < 1e-3);
    assert!(fs::read_to_string(rescored.join("eval.csv")).unwrap().starts_with("method,bucket,count"));
}

#[test]
fn eval_on_references_hits_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "2", "2");
    let data = dir.path().join("data");
    let est = dir.path().join("est");
    fs::create_dir(&est).unwrap();
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(data.join("manifest.json")).unwrap()).unwrap();
    for e in manifest.as_array().unwrap() {
        let id = e["id"].as_str().unwrap();
        fs::copy(data.join(e["target_path"].as_str().unwrap()), est.join(format!("{id}_copy.wav"))).unwrap();
    }
    let out = dir.path().join("eval");
    ok(&["eval", "--data", p(&data.join("manifest.json")), "--estimates", p(&est), "--out", p(&out)]);
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(method_mean(&scores, "copy"), 80.0);
}

#[test]
fn train_separate_and_beampattern() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "2", "3");
    let data = dir.path().join("data/manifest.json");
    let mut cfg = PipelineConfig::td();
    cfg.encoder.bands = Some(48);
    cfg.beamformer = BeamformerVariant::AnMvdr;
    cfg.tcn = TcnConfig { bottleneck: 8, hidden: 12, kernel: 3, blocks: 2, repeats: 1 };
    cfg.head = HeadConfig { projection: Some(8), gru: Some(8) };
    let cfg_path = dir.path().join("model.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let run = dir.path().join("run");
    ok(&["train", "--config", p(&cfg_path), "--data", p(&data), "--epochs", "2", "--out", p(&run)]);
    let trace = fs::read_to_string(run.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 4);
    let epochs: serde_json::Value = serde_json::from_slice(&fs::read(run.join("epochs.json")).unwrap()).unwrap();
    assert_eq!(epochs.as_array().unwrap().len(), 2);

    let sep = dir.path().join("sep");
    ok(&["separate", "--checkpoint", p(&run.join("checkpoint.bkt")), "--data", p(&data), "--out", p(&sep)]);
    let wavs = fs::read_dir(&sep).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wav"));
    assert_eq!(wavs.count(), 2);
    assert!(sep.join("scores.csv").exists());

    let bp = dir.path().join("bp");
    let stdout = ok(&["beampattern", "--duration", "1.0", "--freqs", "1000", "--out", p(&bp)]);
    let line = stdout.lines().find(|l| l.contains("minimum at")).unwrap();
    let deg: f64 = line.split("minimum at").nth(1).unwrap().trim().trim_end_matches("deg").trim().parse().unwrap();
    assert!((deg - 120.0).abs() <= 10.0, "{line}");
    assert!(fs::read_to_string(bp.join("pattern.csv")).unwrap().lines().count() > 100);
}

#[test]
fn features_writes_one_container_per_scene() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "2", "4");
    let out = dir.path().join("feat");
    ok(&["features", "--data", p(&dir.path().join("data/manifest.json")), "--out", p(&out)]);
    let bkt: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(bkt.iter().any(|n| n == "bank.bkt"));
    assert_eq!(bkt.len(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    assert_eq!(beamkit(&["simulate"]).status.code(), Some(2));
    assert_eq!(beamkit(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        beamkit(&["simulate", "--config", p(&missing), "--out", p(dir.path())]).status.code(),
        Some(2)
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{ "duration_s": 0.4, "colour": "blue" }"#).unwrap();
    assert_eq!(beamkit(&["simulate", "--config", p(&bad), "--out", p(dir.path())]).status.code(), Some(2));
    let out = beamkit(&["eval", "--data", p(&missing), "--estimates", p(dir.path()), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}
