use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pnr-pulsekit"));
    c.env_remove("PNR_PULSEKIT_THREADS");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Value {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn error_code(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"]["code"].as_str().unwrap().to_string()
}

fn tvd_entry(report: &Value, channel: &str, method: &str, against: &str) -> f64 {
    report["tvd"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["channel"] == channel && r["method"] == method && r["against"] == against)
        .unwrap_or_else(|| panic!("no tvd row {channel}/{method}/{against}"))["value"]
        .as_f64()
        .unwrap()
}

#[test]
fn coherent_pipeline_recovers_poisson_statistics() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("cfg.json"),
        r#"{
            "seed": 5,
            "simulate": {"source": {"coherent": {"mu": 0.86}}, "rep_rate_hz": 1e5, "n_pulses": 100000},
            "classify_ip": {}
        }"#,
    )
    .unwrap();
    ok(&["--config", "cfg.json", "pipeline", "--out", "run"], d.path());
    let out = d.path().join("run");
    let report = read_json(&out.join("report.json"));
    let t = tvd_entry(&report, "data", "ip", "reference");
    assert!(t <= 0.01, "tvd {t}");
    assert!(report["methods"]["data.ip"]["accuracy"].as_f64().unwrap() >= 0.99);
    for f in ["ip.data.histogram.csv", "ip.data.thresholds.json", "ip.data.labels.csv", "data.meta.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let hist = fs::read_to_string(out.join("ip.data.histogram.csv")).unwrap();
    assert!(hist.starts_with("bin_center,raw_count,smoothed_count\n"));

    let manifest = read_json(&out.join("run.json"));
    assert_eq!(manifest["status"], "ok");
    assert!(manifest["config"]["simulate"]["seed"].is_u64());
    let artifacts = manifest["artifacts"].as_object().unwrap();
    assert!(artifacts.contains_key("report.json"));
    let labels = fs::read(out.join("ip.data.labels.csv")).unwrap();
    use sha2::Digest;
    assert_eq!(artifacts["ip.data.labels.csv"], hex::encode(sha2::Sha256::digest(&labels)));
}

#[test]
fn unknown_config_key_exits_with_two() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("cfg.json"),
        r#"{"simulate": {"source": {"coherent": {"mu": 1}}, "rep_rate_hz": 1e5, "n_pulses": 100}, "classify-ip": {}}"#,
    )
    .unwrap();
    let out = run(&["--config", "cfg.json", "pipeline"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "CONFIG_ERROR");
    assert!(!d.path().join("run").exists());
}

fn without_timing(p: &Path) -> Value {
    let mut v = read_json(p);
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn identical_runs_give_identical_reports() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("cfg.json"),
        r#"{
            "seed": 11,
            "simulate": {"source": {"tmsv": {"lambda": 0.5, "eta_signal": 0.9, "eta_idler": 0.9}}, "rep_rate_hz": 2e5, "n_pulses": 3000},
            "classify_ip": {},
            "knn": {"calibration_pulses": 3000, "calibration_labels": "truth", "history_depth": 1},
            "pca": {"components": 2},
            "cluster": {"fit_traces": 2000, "map_axis": "fitted"},
            "analyze": {"herald": [1, 2]}
        }"#,
    )
    .unwrap();
    ok(&["--config", "cfg.json", "pipeline", "--out", "a"], d.path());
    ok(&["--config", "cfg.json", "--threads", "1", "pipeline", "--out", "b"], d.path());
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert_eq!(without_timing(&a.join("report.json")), without_timing(&b.join("report.json")));
    let ra = read_json(&a.join("run.json"));
    let rb = read_json(&b.join("run.json"));
    assert_eq!(ra["config"], rb["config"]);
    for (name, hash) in ra["artifacts"].as_object().unwrap() {
        if name != "report.json" {
            assert_eq!(&rb["artifacts"][name], hash, "{name} differs");
        }
    }
    let report = read_json(&a.join("report.json"));
    assert!(report["timing"]["knn_us_per_trace"].as_f64().unwrap() > 0.0);
    assert!(report["heralded"].as_array().unwrap().iter().any(|r| r["method"] == "knn" && r["fidelity"].is_f64()));
    assert!(tvd_entry(&report, "signal", "knn", "truth") < 0.05);
}

#[test]
fn a_different_seed_changes_the_data() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("cfg.json"),
        r#"{"simulate": {"source": {"coherent": {"mu": 1}}, "rep_rate_hz": 1e5, "n_pulses": 500}, "classify_ip": {}}"#,
    )
    .unwrap();
    ok(&["--config", "cfg.json", "--seed", "1", "pipeline", "--out", "a"], d.path());
    ok(&["--config", "cfg.json", "--seed", "2", "pipeline", "--out", "b"], d.path());
    let ha = read_json(&d.path().join("a/run.json"))["artifacts"]["data.traces.bin"].clone();
    let hb = read_json(&d.path().join("b/run.json"))["artifacts"]["data.traces.bin"].clone();
    assert_ne!(ha, hb);
}

#[test]
fn failed_stage_keeps_partial_artifacts() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("cfg.json"),
        r#"{
            "simulate": {"source": {"coherent": {"mu": 1}}, "rep_rate_hz": 1e5, "n_pulses": 200},
            "classify_ip": {},
            "knn": {"calibration_rate_hz": 4e5}
        }"#,
    )
    .unwrap();
    let out = run(&["--config", "cfg.json", "pipeline", "--out", "run"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "RATE_NOT_HIGHER");
    let run_dir = d.path().join("run");
    assert_eq!(read_json(&run_dir.join("error.json"))["error"]["code"], "RATE_NOT_HIGHER");
    assert_eq!(read_json(&run_dir.join("run.json"))["status"], "failed");
    assert!(run_dir.join("ip.data.labels.csv").exists());
}

#[test]
fn missing_input_bundle_is_a_runtime_error() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("cfg.json"), r#"{"input": {"bundle": "nope"}, "classify_ip": {}}"#).unwrap();
    let out = run(&["--config", "cfg.json", "pipeline"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "IO_ERROR");
}

#[test]
fn simulate_without_source_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--rep-rate", "1e5", "--n-pulses", "10"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "CONFIG_ERROR");
}

#[test]
fn subcommands_chain_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let sim = ok(
        &["--seed", "3", "simulate", "--mu", "1", "--rep-rate", "1e5", "--n-pulses", "4000", "--name", "coh"],
        p,
    );
    assert_eq!(sim["n_traces"], 4000);
    assert!(p.join("coh.sim.json").exists());

    let ip = ok(&["classify-ip", "--in", "coh", "--out", "ip.csv"], p);
    assert!(ip["accuracy"].as_f64().unwrap() > 0.98);
    assert!(p.join("histogram.csv").exists() && p.join("thresholds.json").exists());

    let pca = ok(&["pca", "--in", "coh", "--components", "2", "--scores-out", "scores.csv"], p);
    assert_eq!(pca["components"], 2);
    assert!(p.join("coh.pca.json").exists());
    assert!(fs::read_to_string(p.join("scores.csv")).unwrap().starts_with("score1,score2,label\n"));

    let cl = ok(
        &["cluster", "--scores", "scores.csv", "--min-cluster-size", "40", "--min-samples", "8", "--epsilon", "0",
          "--model-out", "m.hdb", "--labels-out", "cl.csv", "--fit-rows", "3000"],
        p,
    );
    assert!(cl["n_clusters"].as_u64().unwrap() >= 3);
    assert!(cl["us_per_trace"].as_f64().is_some());
    assert_eq!(fs::read_to_string(p.join("cl.csv")).unwrap().lines().count(), 4000);

    // relabel cluster 0 by hand
    fs::write(p.join("map.json"), r#"{"0": 5}"#).unwrap();
    let manual = ok(
        &["cluster", "--scores", "scores.csv", "--model-out", "m2.hdb", "--labels-out", "cl2.csv",
          "--photon-map", "map.json", "--min-cluster-size", "40", "--min-samples", "8"],
        p,
    );
    assert_eq!(manual["photon_map"], serde_json::json!({"0": 5}));

    ok(&["--seed", "4", "simulate", "--mu", "3", "--rep-rate", "1e5", "--n-pulses", "3000", "--name", "cal"], p);
    ok(&["--seed", "5", "simulate", "--mu", "1", "--rep-rate", "4e5", "--n-pulses", "2000", "--name", "fast"], p);
    let tr = ok(&["knn-train", "--calib", "cal", "--target-rate", "4e5", "--k", "5", "--features", "pca:6", "--history-depth", "3", "--model-out", "m.knn"], p);
    assert_eq!(tr["features"], "pca:6");
    let pr = ok(&["knn-predict", "--model", "m.knn", "--in", "fast", "--out", "fast.csv"], p);
    assert!(pr["accuracy"].as_f64().unwrap() > 0.9, "{pr}");
    assert!(pr["us_per_trace"].as_f64().unwrap() > 0.0);

    let m = ok(&["metric", "tvd", "--p", "fast.csv", "--q", "poisson:1"], p);
    assert_eq!(m["metric"], "tvd");
    assert!(m["value"].as_f64().unwrap() < 0.1);
    let f = ok(&["metric", "dist-fidelity", "--p", "fast.csv", "--q", "fast.labels.csv", "--out", "fid.json"], p);
    assert!(f["value"].as_f64().unwrap() > 0.99);
    assert_eq!(read_json(&p.join("fid.json"))["metric"], "dist_fidelity");

    let bad = run(&["knn-train", "--calib", "cal", "--target-rate", "4e5", "--features", "pcb:2"], p);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn herald_tomography_and_fidelity() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        &["simulate", "--source", "tmsv", "--lambda", "0.6", "--eta-signal", "0.8", "--eta-idler", "0.8",
          "--rep-rate", "1e5", "--n-pulses", "500", "--name", "pair"],
        p,
    );
    let h = ok(&["herald", "--signal", "pair.signal.labels.csv", "--idler", "pair.idler.labels.csv", "--n", "1", "--out", "h.json"], p);
    assert!(h["events"].as_u64().unwrap() > 0);
    let dist = read_json(&p.join("h.json"));
    assert!(dist["probs"].is_array() && dist["truncation"].is_u64());
    let empty = run(&["herald", "--signal", "pair.signal.labels.csv", "--idler", "pair.idler.labels.csv", "--n", "40"], p);
    assert_eq!(error_code(&empty), "EMPTY_HERALD");

    let mut probes = Vec::new();
    for (i, mu) in [0.5, 1.0, 2.0, 3.0, 4.5, 6.0].iter().enumerate() {
        let name = format!("probe{i}");
        ok(
            &["--seed", &i.to_string(), "simulate", "--mu", &mu.to_string(), "--rep-rate", "1e5", "--n-pulses", "400",
              "--name", &name],
            p,
        );
        probes.push(serde_json::json!({"mu": mu, "mu_sigma": 0.0, "n_pulses": 400, "labels_csv": format!("{name}.labels.csv")}));
    }
    fs::write(p.join("probes.json"), serde_json::to_string(&probes).unwrap()).unwrap();
    let t = ok(&["tomography", "--probes", "probes.json", "--N", "4", "--M", "4", "--bootstrap", "4", "--out", "theta.json"], p);
    assert!(t["mean_std"].as_f64().is_some());
    let fid = ok(&["metric", "fidelity", "--theta", "theta.json", "--reference", "binomial:1"], p);
    assert_eq!(fid["metric"], "fidelity");
    assert!(fid["value"].as_f64().unwrap() > 0.8, "{fid}");
    let self_fid = ok(&["metric", "fidelity", "--theta", "theta.json", "--reference", "theta.json", "--empty-rows", "exclude"], p);
    assert!((self_fid["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let few = p.join("one.json");
    fs::write(&few, serde_json::to_string(&probes[..1]).unwrap()).unwrap();
    let out = run(&["tomography", "--probes", "one.json", "--N", "4", "--M", "4"], p);
    assert_eq!(error_code(&out), "TOO_FEW_PROBES");
}
