use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grassnet::TimeSeriesPanel;
use grassnet_cli::bench::RunManifest;
use grassnet_cli::commands::FeatureRecord;
use grassnet_cli::io::{read_panel, write_panel};
use nalgebra::DMatrix;
use serde_json::{json, Value};
use tempfile::TempDir;

fn grassnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grassnet"))
        .args(args)
        .env_remove("GRASSNET_THREADS")
        .env_remove("GRASSNET_CONFIG")
        .env_remove("GRASSNET_OUT")
        .env_remove("GRASSNET_SEED")
        .env_remove("GRASSNET_MODE")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn repo_config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn write(dir: &Path, name: &str, value: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string(value).unwrap()).unwrap();
    p.display().to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn small_pipeline(scope: &str) -> Value {
    json!({
        "window": { "N": 1, "m": 2, "rho": 1, "tau_f": 5, "tau_b": 3, "buff": 2, "stride": 1, "scope": scope },
        "kernel": { "kind": "linear" },
        "gct": { "k_nn": 2, "sigma_alpha": 1.0, "sigma_theta": 1.0 }
    })
}

/// Deterministic smooth panel with `nodes` rows.
fn small_panel(dir: &Path, nodes: usize, len: usize) -> PathBuf {
    let m = DMatrix::from_fn(nodes, len, |r, c| ((r + 1) as f64 * 0.37 * c as f64).sin() + 0.1 * r as f64);
    let p = dir.join("panel.csv");
    write_panel(&p, &TimeSeriesPanel::from_samples(m).unwrap()).unwrap();
    p
}

fn records(path: &Path) -> Vec<FeatureRecord> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn synth_d1_writes_ten_by_six_hundred() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d1");
    ok(&grassnet(&["synth", "--config", &repo_config("d1_analog.json"), "--out", &s(&out)]));
    let panel = read_panel(&out.join("panel.csv")).unwrap();
    assert_eq!((panel.node_count(), panel.len()), (10, 600));
    let truth: Value = serde_json::from_str(&fs::read_to_string(out.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["sample_states"].as_array().unwrap().len(), 600);
}

#[test]
fn synth_same_seed_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&grassnet(&["synth", "--config", &repo_config("d1_analog.json"), "--out", &s(out), "--seed", "9"]));
    }
    for f in ["panel.csv", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    ok(&grassnet(&["synth", "--config", &repo_config("d1_analog.json"), "--out", &s(&c), "--seed", "10"]));
    assert_ne!(fs::read(a.join("panel.csv")).unwrap(), fs::read(c.join("panel.csv")).unwrap());
}

#[test]
fn synth_rejects_bad_noise_sigma() {
    let dir = TempDir::new().unwrap();
    for sigma in ["\"loud\"", "1e999"] {
        let spec = format!(r#"{{"node_count": 2, "states": [{{"blocks": [[0, 1]], "noise_sigma_db": {sigma}, "duration": 50}}]}}"#);
        let cfg = dir.path().join("bad.json");
        fs::write(&cfg, spec).unwrap();
        let out = grassnet(&["synth", "--config", &s(&cfg), "--out", &s(&dir.path().join("o"))]);
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("bad.json") && !err.contains("variant"), "{err}");
    }
    // parses, but an outlier count that cannot be placed symmetrically is rejected
    let spec = json!({
        "node_count": 2,
        "states": [{ "blocks": [[0, 1]], "noise_sigma_db": -10.0, "outlier_entries": 3, "duration": 50 }]
    });
    let cfg = write(dir.path(), "odd.json", &spec);
    let out = grassnet(&["synth", "--config", &cfg, "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outlier_entries"));
}

#[test]
fn extract_network_wide_five_anchors() {
    let dir = TempDir::new().unwrap();
    // span = tau_b + tau_f + m + N - 2 = 9, four more samples give five anchors
    let panel = small_panel(dir.path(), 3, 13);
    let cfg = write(dir.path(), "cfg.json", &small_pipeline("network_wide"));
    let out = dir.path().join("f.jsonl");
    ok(&grassnet(&["extract", "--panel", &s(&panel), "--config", &cfg, "--out", &s(&out)]));
    let recs = records(&out);
    assert_eq!(recs.len(), 5);
    assert_eq!(recs.iter().map(|r| r.anchor).collect::<Vec<_>>(), vec![2, 3, 4, 5, 6]);
    for r in &recs {
        assert_eq!((r.rows, r.cols, r.basis.len()), (2, 1, 2));
        let norm: f64 = r.basis.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn extract_per_node_three_nodes_five_anchors() {
    let dir = TempDir::new().unwrap();
    // per-node vectors are buff = 2 long, so one extra sample
    let panel = small_panel(dir.path(), 3, 14);
    let cfg = write(dir.path(), "cfg.json", &small_pipeline("per_node"));
    let out = dir.path().join("f.jsonl");
    ok(&grassnet(&["extract", "--panel", &s(&panel), "--config", &cfg, "--out", &s(&out)]));
    let recs = records(&out);
    assert_eq!(recs.len(), 15);
    for node in ["0", "1", "2"] {
        assert_eq!(recs.iter().filter(|r| r.node == node).count(), 5);
    }
}

#[test]
fn extract_short_panel_names_lengths() {
    let dir = TempDir::new().unwrap();
    let panel = small_panel(dir.path(), 2, 6);
    let cfg = write(dir.path(), "cfg.json", &small_pipeline("network_wide"));
    let out = grassnet(&["extract", "--panel", &s(&panel), "--config", &cfg, "--out", &s(&dir.path().join("f"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('9') && err.contains('6'), "{err}");
}

#[test]
fn cluster_states_on_d1() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d1");
    ok(&grassnet(&["synth", "--config", &repo_config("d1_analog.json"), "--out", &s(&data)]));
    let out = dir.path().join("states.json");
    ok(&grassnet(&[
        "cluster", "--mode", "states",
        "--panel", &s(&data.join("panel.csv")),
        "--config", &repo_config("states.json"),
        "--out", &s(&out),
    ]));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["mode"], "states");
    assert_eq!(doc["sample_labels"].as_array().unwrap().len(), 600);
    assert_eq!(doc["partition"]["segments"].as_array().unwrap().len(), 4);
}

#[test]
fn cluster_communities_uses_known_states() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("pc");
    let preset = write(dir.path(), "preset.json", &json!({ "preset": "planted_communities" }));
    ok(&grassnet(&["synth", "--config", &preset, "--out", &s(&data)]));
    let out = dir.path().join("comm.json");
    ok(&grassnet(&[
        "cluster", "--mode", "communities",
        "--panel", &s(&data.join("panel.csv")),
        "--config", &repo_config("communities.json"),
        "--known-states", &s(&data.join("truth.json")),
        "--out", &s(&out),
    ]));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let truth: Value = serde_json::from_str(&fs::read_to_string(data.join("truth.json")).unwrap()).unwrap();
    assert_eq!(doc["partition"], truth["partition"]);
    let states = doc["states"].as_array().unwrap();
    assert_eq!(states.len(), 2);
}

#[test]
fn cluster_sequences_reports_cross_state_groups() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("sd");
    let preset = write(dir.path(), "preset.json", &json!({ "preset": "shared_driver" }));
    ok(&grassnet(&["synth", "--config", &preset, "--out", &s(&data)]));
    let out = dir.path().join("seq.json");
    ok(&grassnet(&[
        "cluster", "--mode", "sequences",
        "--panel", &s(&data.join("panel.csv")),
        "--config", &repo_config("sequences.json"),
        "--known-states", &s(&data.join("truth.json")),
        "--out", &s(&out),
    ]));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(!doc["cross_state_labels"].as_array().unwrap().is_empty());
}

#[test]
fn eval_scores_permuted_labels() {
    let dir = TempDir::new().unwrap();
    let pred = write(dir.path(), "pred.json", &json!([1, 1, 0, 0, 2, 2]));
    let truth = write(dir.path(), "truth.json", &json!({ "sample_states": [0, 0, 1, 1, 2, 2] }));
    let out = dir.path().join("eval.json");
    ok(&grassnet(&["eval", "--pred", &pred, "--truth", &truth, "--out", &s(&out)]));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert!((report["nmi"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let short = write(dir.path(), "short.json", &json!([0, 1]));
    let out = grassnet(&["eval", "--pred", &short, "--truth", &truth, "--out", &s(&dir.path().join("e"))]);
    assert_eq!(out.status.code(), Some(2));
}

fn tiny_bench(dir: &Path) -> String {
    let mut pipeline = small_pipeline("network_wide");
    pipeline["window"] = json!({ "N": 3, "m": 2, "rho": 2, "tau_f": 20, "tau_b": 5, "stride": 4, "scope": "network_wide" });
    pipeline["gct"]["k_nn"] = json!(4);
    write(
        dir,
        "bench.json",
        &json!({
            "datasets": [{
                "name": "tiny",
                "scenario": {
                    "node_count": 4,
                    "states": [
                        { "blocks": [[0, 1, 2], [3]], "noise_sigma_db": -10.0, "outlier_entries": 0, "duration": 120 },
                        { "blocks": [[0, 1], [2, 3]], "noise_sigma_db": -10.0, "outlier_entries": 0, "duration": 120 }
                    ]
                },
                "pipeline": pipeline
            }]
        }),
    )
}

#[test]
fn bench_single_trial_has_zero_std() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_bench(dir.path());
    let out = dir.path().join("run");
    ok(&grassnet(&["bench", "--config", &cfg, "--trials", "1", "--out", &s(&out)]));
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.seeds, vec![0]);
    assert_eq!(manifest.trials.len(), 1);
    assert!(!manifest.aggregate.is_empty());
    for a in &manifest.aggregate {
        assert_eq!(a.std, 0.0);
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("dataset,metric,mean,std"));
}

#[test]
fn bench_zero_trials_is_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_bench(dir.path());
    let out = grassnet(&["bench", "--config", &cfg, "--trials", "0", "--out", &s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_supplies_missing_flags() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("env");
    let status = Command::new(env!("CARGO_BIN_EXE_grassnet"))
        .arg("synth")
        .env("GRASSNET_CONFIG", repo_config("d1_analog.json"))
        .env("GRASSNET_OUT", &out)
        .env("GRASSNET_SEED", "3")
        .output()
        .unwrap();
    ok(&status);
    let flagged = dir.path().join("flag");
    ok(&grassnet(&["synth", "--config", &repo_config("d1_analog.json"), "--out", &s(&flagged), "--seed", "3"]));
    assert_eq!(fs::read(out.join("panel.csv")).unwrap(), fs::read(flagged.join("panel.csv")).unwrap());
}

#[test]
fn missing_input_is_io_error() {
    let dir = TempDir::new().unwrap();
    let out = grassnet(&["synth", "--config", &s(&dir.path().join("nope.json")), "--out", &s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let panel = small_panel(dir.path(), 3, 13);
    let mut cfg = small_pipeline("network_wide");
    cfg["windw"] = json!({});
    let cfg = write(dir.path(), "cfg.json", &cfg);
    let out = grassnet(&["extract", "--panel", &s(&panel), "--config", &cfg, "--out", &s(&dir.path().join("f"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("windw"));
}

#[test]
fn panel_csv_round_trip_is_exact() {
    let dir = TempDir::new().unwrap();
    let m = DMatrix::from_fn(3, 40, |r, c| (r as f64 + 1.0) / 7.0 * (c as f64).exp().ln_1p() - 1e-17 * c as f64);
    let panel = TimeSeriesPanel::from_samples(m).unwrap();
    let p = dir.path().join("p.csv");
    write_panel(&p, &panel).unwrap();
    let back = read_panel(&p).unwrap();
    assert_eq!(back.samples(), panel.samples());
    assert_eq!(back.node_ids(), panel.node_ids());
}
