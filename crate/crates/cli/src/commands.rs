//! One function per subcommand. Each returns the JSON summary printed on
//! stdout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pnr_pulsekit::analysis::{
    distribution_fidelity, herald_labels, povm_fidelity, reconstruct_povm, tvd, ConfusionMatrix, EmptyRowPolicy,
    ProbeRecord, TomographyOptions,
};
use pnr_pulsekit::bundle::{bundle_base, load_bundle, save_labeled, write_labels_csv};
use pnr_pulsekit::distribution::max_label;
use pnr_pulsekit::filter_ip::{classify_ip, IpClassification, ValleyParams};
use pnr_pulsekit::hdbscan::{self, ClusterModel, HdbscanParams, MapAxis};
use pnr_pulsekit::knn::{self, FeatureMode};
use pnr_pulsekit::pca::{FactorScores, PcaModel};
use pnr_pulsekit::simulator::{simulate, Simulated, SimulationConfig, SourceModel};
use pnr_pulsekit::{distribution_from_labels, Exec, Label, LabeledBatch};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::cli::*;
use crate::error::{CliError, CliResult};
use crate::io::{self, resolve};

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub exec: Exec,
}

impl Ctx {
    pub fn out(&self, p: &Path) -> PathBuf {
        resolve(&self.out_dir, p)
    }
}

/// Parses a config document strictly; any mistake is a config error.
pub fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn parse_feature_mode(s: &str) -> CliResult<FeatureMode> {
    s.parse().map_err(|e: pnr_pulsekit::Error| CliError::config(e.to_string()))
}

pub fn parse_map_axis(s: &str) -> CliResult<MapAxis> {
    s.parse().map_err(|e: pnr_pulsekit::Error| CliError::config(e.to_string()))
}

/// Fraction of traces whose label equals the truth.
pub fn overall_accuracy(predicted: &[Label], truth: &[Label]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Distribution, unclassified share and, with ground truth, accuracies.
pub fn label_summary(labels: &[Label], truth: Option<&[Label]>) -> CliResult<Value> {
    let top = max_label(labels).unwrap_or(0);
    let dist = distribution_from_labels(labels, top, false)?;
    let mut v = json!({
        "n_traces": labels.len(),
        "distribution": dist.probs(),
        "unclassified_fraction": dist.unclassified(),
        "mean_photons": dist.mean(),
    });
    if let Some(t) = truth.filter(|t| t.len() == labels.len()) {
        v["accuracy"] = json!(overall_accuracy(labels, t));
        v["per_class_accuracy"] = serde_json::to_value(pnr_pulsekit::analysis::class_accuracy(labels, t)?)
            .map_err(|e| CliError::Format(e.to_string()))?;
    }
    Ok(v)
}

// ---------------------------------------------------------------- simulate

fn simulation_config(ctx: &Ctx, a: &SimulateArgs) -> CliResult<SimulationConfig> {
    let mut cfg = match &ctx.config {
        Some(path) => {
            let doc: Value = read_config(path)?;
            let block = match doc.get("simulate") {
                Some(inner) if doc.as_object().is_some_and(|o| o.len() == 1) => inner.clone(),
                _ => doc,
            };
            serde_json::from_value::<SimulationConfig>(block)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => {
            let source = source_from_flags(a)?
                .ok_or_else(|| CliError::config("simulate needs --config or --source/--mu/--lambda"))?;
            let rate = a.rep_rate.ok_or_else(|| CliError::config("--rep-rate is required without --config"))?;
            let n = a.n_pulses.ok_or_else(|| CliError::config("--n-pulses is required without --config"))?;
            SimulationConfig::new(source, rate, n, 0)
        }
    };
    if ctx.config.is_some() {
        if let Some(s) = source_from_flags(a)? {
            cfg.source = s;
        }
    }
    if let Some(r) = a.rep_rate {
        cfg.rep_rate_hz = r;
    }
    if let Some(n) = a.n_pulses {
        cfg.n_pulses = n;
    }
    if let Some(h) = a.history_depth {
        cfg.history_depth = h;
    }
    if let Some(s) = a.noise_sigma {
        cfg.pulse_shape.noise_sigma = s;
    }
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn source_from_flags(a: &SimulateArgs) -> CliResult<Option<SourceModel>> {
    let kind = match (a.source, a.mu, a.lambda) {
        (Some(k), _, _) => k,
        (None, Some(_), None) => SourceKind::Coherent,
        (None, None, Some(_)) => SourceKind::Tmsv,
        (None, None, None) => return Ok(None),
        (None, Some(_), Some(_)) => return Err(CliError::config("--mu and --lambda select different sources")),
    };
    Ok(Some(match kind {
        SourceKind::Coherent => SourceModel::Coherent {
            mu: a.mu.ok_or_else(|| CliError::config("coherent source needs --mu"))?,
        },
        SourceKind::Tmsv => SourceModel::Tmsv {
            lambda: a.lambda.ok_or_else(|| CliError::config("tmsv source needs --lambda"))?,
            eta_signal: a.eta_signal.unwrap_or(1.0),
            eta_idler: a.eta_idler.unwrap_or(1.0),
        },
    }))
}

/// Writes the simulated bundles under `base`; returns their paths.
pub fn write_simulated(sim: &Simulated, base: &Path) -> CliResult<Vec<PathBuf>> {
    io::ensure_parent(base)?;
    let named = |suffix: &str| {
        let mut s = base.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    Ok(match sim {
        Simulated::Single(b) => {
            save_labeled(b, base)?;
            vec![base.to_path_buf()]
        }
        Simulated::Pair { signal, idler } => {
            let (s, i) = (named(".signal"), named(".idler"));
            save_labeled(signal, &s)?;
            save_labeled(idler, &i)?;
            vec![s, i]
        }
    })
}

pub fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> CliResult<Value> {
    let cfg = simulation_config(ctx, a)?;
    let sim = simulate(&cfg, ctx.exec)?;
    let base = ctx.out(&a.name);
    let bundles = write_simulated(&sim, &base)?;
    let mut cfg_path = base.as_os_str().to_owned();
    cfg_path.push(".sim.json");
    io::write_json(Path::new(&cfg_path), &cfg)?;
    Ok(json!({
        "bundles": bundles,
        "config": cfg,
        "n_traces": cfg.n_pulses,
    }))
}

// ------------------------------------------------------------- classify-ip

/// Labels plus `histogram.csv` and `thresholds.json` named with `prefix`.
pub fn write_ip_artifacts(ip: &IpClassification, labels_path: &Path, prefix: &str) -> CliResult<()> {
    io::ensure_parent(labels_path)?;
    write_labels_csv(labels_path, ip.labels())?;
    let dir = labels_path.parent().unwrap_or(Path::new("."));
    io::write_histogram_csv(&dir.join(format!("{prefix}histogram.csv")), &ip.binning.histogram)?;
    let centers = &ip.binning.histogram.bin_centers;
    io::write_json(
        &dir.join(format!("{prefix}thresholds.json")),
        &json!({
            "thresholds": ip.binning.thresholds,
            "peak_bins": ip.binning.peaks,
            "peak_centers": ip.binning.peaks.iter().map(|&b| centers[b]).collect::<Vec<_>>(),
        }),
    )
}

pub fn cmd_classify_ip(ctx: &Ctx, a: &ClassifyIpArgs) -> CliResult<Value> {
    let bundle = load_bundle(&a.input)?;
    let d = ValleyParams::default();
    let params = ValleyParams {
        n_bins: a.bins.unwrap_or(d.n_bins),
        smoothing_window: a.smooth.unwrap_or(d.smoothing_window),
        min_prominence_fraction: a.prominence.unwrap_or(d.min_prominence_fraction),
    };
    let t = Instant::now();
    let ip = classify_ip(&bundle.batch, &params, ctx.exec)?;
    let secs = t.elapsed().as_secs_f64();
    write_ip_artifacts(&ip, &ctx.out(&a.out), "")?;
    let mut v = label_summary(ip.labels(), bundle.labels.as_deref())?;
    v["thresholds"] = json!(ip.binning.thresholds);
    v["seconds"] = json!(secs);
    Ok(v)
}

// --------------------------------------------------------------------- pca

pub fn bundle_name(path: &Path) -> String {
    bundle_base(path).file_name().map_or_else(|| "bundle".into(), |n| n.to_string_lossy().into_owned())
}

pub fn explained_variance(model: &PcaModel, n: usize) -> Vec<f64> {
    let total: f64 = model.singular_values.iter().map(|s| s * s).sum();
    model
        .singular_values
        .iter()
        .take(n)
        .map(|s| if total > 0.0 { s * s / total } else { 0.0 })
        .collect()
}

pub fn fit_pca(labeled: &pnr_pulsekit::TraceBatch, fit_traces: Option<usize>) -> CliResult<PcaModel> {
    let n = labeled.n_traces();
    let m = fit_traces.unwrap_or(n).min(n);
    Ok(if m == n { PcaModel::fit(labeled)? } else { PcaModel::fit(&labeled.slice(0..m)?)? })
}

pub fn cmd_pca(ctx: &Ctx, a: &PcaArgs) -> CliResult<Value> {
    let bundle = load_bundle(&a.input)?;
    let (model, model_path) = match &a.model {
        Some(p) => (io::read_json::<PcaModel>(p)?, p.clone()),
        None => {
            let model = fit_pca(&bundle.batch, a.fit_traces)?;
            let p = ctx.out(
                &a.model_out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.pca.json", bundle_name(&a.input)))),
            );
            io::write_json(&p, &model)?;
            (model, p)
        }
    };
    let scores = model.transform(&bundle.batch, a.components, ctx.exec)?;
    io::write_scores_csv(&ctx.out(&a.scores_out), &scores, bundle.labels.as_deref())?;
    Ok(json!({
        "n_traces": scores.n_rows(),
        "components": a.components,
        "explained_variance_ratio": explained_variance(&model, a.components),
        "model": model_path,
    }))
}

// --------------------------------------------------------------------- knn

pub fn cmd_knn_train(ctx: &Ctx, a: &KnnTrainArgs) -> CliResult<Value> {
    let features = parse_feature_mode(&a.features)?;
    let bundle = load_bundle(&a.calib)?;
    let labels = match &a.labels {
        Some(p) => io::read_labels(p)?,
        None => bundle
            .labels
            .clone()
            .ok_or_else(|| CliError::config("calibration bundle has no labels; pass --labels"))?,
    };
    let calib = LabeledBatch::new(bundle.batch, labels)?;
    let training = knn::build_training_set(&calib, a.target_rate, a.history_depth, ctx.seed.unwrap_or(0))?;
    let model = knn::fit_knn(&training, a.k, features, ctx.exec)?;
    let path = ctx.out(&a.model_out);
    io::ensure_parent(&path)?;
    knn::save_model(&model, &path)?;
    Ok(json!({
        "n_train": model.n_train(),
        "k": model.k(),
        "features": features.to_string(),
        "target_rate_hz": a.target_rate,
        "model": path,
    }))
}

pub fn cmd_knn_predict(ctx: &Ctx, a: &KnnPredictArgs) -> CliResult<Value> {
    let model = knn::load_model(&a.model)?;
    let bundle = load_bundle(&a.input)?;
    let t = Instant::now();
    let labels = model.predict(&bundle.batch, ctx.exec)?;
    let secs = t.elapsed().as_secs_f64();
    let out = ctx.out(&a.out);
    io::ensure_parent(&out)?;
    write_labels_csv(&out, &labels)?;
    let mut v = label_summary(&labels, bundle.labels.as_deref())?;
    v["seconds"] = json!(secs);
    v["us_per_trace"] = json!(secs * 1e6 / labels.len().max(1) as f64);
    Ok(v)
}

// ----------------------------------------------------------------- cluster

pub struct ClusterRun {
    pub model: ClusterModel,
    pub labels: Vec<Label>,
    pub predict_seconds: f64,
    pub n_predicted: usize,
}

/// Fits on the first `fit_rows` score rows and predicts the remainder.
pub fn run_cluster(
    scores: &FactorScores,
    fit_rows: Option<usize>,
    params: &HdbscanParams,
    photon_map: Option<BTreeMap<usize, usize>>,
    axis: MapAxis,
    merge_gap: f64,
    exec: Exec,
) -> CliResult<ClusterRun> {
    let dim = scores.n_components();
    let n = scores.n_rows();
    let m = fit_rows.unwrap_or(n).min(n);
    let data = scores.as_slice();
    let mut model = hdbscan::fit(&data[..m * dim], dim, params, exec)?;
    match photon_map {
        Some(map) => model.set_photon_map(map)?,
        None => model.assign_photon_numbers_along(axis, merge_gap)?,
    }
    model.prepare();
    let mut labels = model.labels();
    let t = Instant::now();
    labels.extend(model.predict(&data[m * dim..], exec)?);
    Ok(ClusterRun { model, labels, predict_seconds: t.elapsed().as_secs_f64(), n_predicted: n - m })
}

pub fn cluster_summary(run: &ClusterRun, truth: Option<&[Label]>) -> CliResult<Value> {
    let mut v = label_summary(&run.labels, truth)?;
    v["n_clusters"] = json!(run.model.n_clusters());
    v["noise_fraction"] = json!(run.model.noise_fraction());
    v["photon_map"] = json!(run.model.photon_map);
    v["warnings"] = json!(run.model.warnings);
    Ok(v)
}

pub fn cmd_cluster(ctx: &Ctx, a: &ClusterArgs) -> CliResult<Value> {
    let scores = io::read_scores_csv(&a.scores)?;
    let params = HdbscanParams {
        min_cluster_size: a.min_cluster_size,
        min_samples: a.min_samples,
        selection_epsilon: a.epsilon,
    };
    let map = a.photon_map.as_deref().map(io::read_json::<BTreeMap<usize, usize>>).transpose()?;
    let run = run_cluster(&scores, a.fit_rows, &params, map, parse_map_axis(&a.map_axis)?, a.merge_gap, ctx.exec)?;
    let model_path = ctx.out(&a.model_out);
    io::ensure_parent(&model_path)?;
    run.model.save(&model_path)?;
    let labels_path = ctx.out(&a.labels_out);
    io::ensure_parent(&labels_path)?;
    write_labels_csv(&labels_path, &run.labels)?;
    let mut v = cluster_summary(&run, None)?;
    if run.n_predicted > 0 {
        v["us_per_trace"] = json!(run.predict_seconds * 1e6 / run.n_predicted as f64);
    }
    Ok(v)
}

// ------------------------------------------------------------------ herald

pub fn cmd_herald(ctx: &Ctx, a: &HeraldArgs) -> CliResult<Value> {
    let signal = io::read_labels(&a.signal)?;
    let idler = io::read_labels(&a.idler)?;
    let dist = herald_labels(&signal, &idler, a.n, a.truncation)?;
    let events =
        signal.iter().zip(&idler).filter(|(s, i)| !s.is_unclassified() && i.count() == Some(a.n)).count();
    io::write_json(&ctx.out(&a.out), &dist)?;
    Ok(json!({ "n_idler": a.n, "events": events, "distribution": dist.probs(), "mean_photons": dist.mean() }))
}

// -------------------------------------------------------------- tomography

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeEntry {
    mu: f64,
    #[serde(default)]
    mu_sigma: f64,
    n_pulses: Option<u64>,
    labels_csv: PathBuf,
}

pub fn cmd_tomography(ctx: &Ctx, a: &TomographyArgs) -> CliResult<Value> {
    let entries: Vec<ProbeEntry> = io::read_json(&a.probes)?;
    let base = a.probes.parent().unwrap_or(Path::new("."));
    let probes = entries
        .iter()
        .map(|e| {
            let labels = io::read_labels(&base.join(&e.labels_csv))?;
            let top = max_label(&labels).unwrap_or(0);
            Ok(ProbeRecord {
                mu: e.mu,
                mu_sigma: e.mu_sigma,
                measured: distribution_from_labels(&labels, top, false)?,
                n_pulses: e.n_pulses.unwrap_or(labels.len() as u64),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let opts = TomographyOptions {
        max_iterations: a.max_iterations,
        relative_tolerance: a.tolerance,
        bootstrap: a.bootstrap,
        seed: ctx.seed.unwrap_or(0),
        record_objective: false,
        exec: ctx.exec,
    };
    let result = reconstruct_povm(&probes, a.n_reported, a.m_actual, &opts)?;
    io::write_json(&ctx.out(&a.out), &result)?;
    let mean_std = result.std.as_ref().map(|s| s.iter().sum::<f64>() / s.len() as f64);
    Ok(json!({
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
        "mean_std": mean_std,
        "warnings": result.warnings,
    }))
}

// ------------------------------------------------------------------ metric

fn emit(ctx: &Ctx, out: Option<&Path>, v: Value) -> CliResult<Value> {
    if let Some(p) = out {
        io::write_json(&ctx.out(p), &v)?;
    }
    Ok(v)
}

/// A confusion matrix file: tomography output or the bare matrix.
pub fn read_confusion(path: &Path) -> CliResult<ConfusionMatrix> {
    let raw: Value = io::read_json(path)?;
    let inner = match raw.get("theta") {
        Some(t) if t.is_object() => t.clone(),
        _ => raw,
    };
    let cm: ConfusionMatrix =
        serde_json::from_value(inner).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    Ok(ConfusionMatrix::new(cm.as_slice().to_vec(), cm.n_reported(), cm.m_actual())?)
}

pub fn cmd_metric(ctx: &Ctx, m: &MetricCommand) -> CliResult<Value> {
    match m {
        MetricCommand::Tvd(a) | MetricCommand::DistFidelity(a) => {
            let p = io::read_probabilities(&a.p, a.truncation)?;
            let q = io::read_probabilities(&a.q, a.truncation.or(Some((p.len() - 1).max(io::REFERENCE_TRUNCATION))))?;
            let (name, value) = match m {
                MetricCommand::Tvd(_) => ("tvd", tvd(&p, &q)),
                _ => ("dist_fidelity", distribution_fidelity(&p, &q)),
            };
            let details = json!({ "p": a.p, "q": a.q, "p_truncation": p.len() - 1, "q_truncation": q.len() - 1 });
            emit(ctx, a.out.as_deref(), json!({ "metric": name, "value": value, "details": details }))
        }
        MetricCommand::Fidelity(a) => {
            let theta = read_confusion(&a.theta)?;
            let reference = match a.reference.strip_prefix("binomial:") {
                Some(eta) => {
                    let eta: f64 = eta.parse().map_err(|_| CliError::config(format!("bad efficiency {eta:?}")))?;
                    ConfusionMatrix::binomial_loss(eta, theta.n_reported().max(theta.m_actual()))?
                }
                None => read_confusion(Path::new(&a.reference))?,
            };
            let n_max = a.n_max.unwrap_or(theta.n_reported().min(reference.n_reported()));
            let m_max = a.m_max.unwrap_or(theta.m_actual().min(reference.m_actual()));
            let policy = match a.empty_rows {
                EmptyRows::BothZeroIsOne => EmptyRowPolicy::BothZeroIsOne,
                EmptyRows::Exclude => EmptyRowPolicy::Exclude,
            };
            let value = povm_fidelity(&theta, &reference, n_max, m_max, policy)?;
            let details = json!({
                "reference": a.reference,
                "n_max": n_max,
                "m_max": m_max,
                "empty_rows": policy,
                "max_abs_diff": (theta.n_reported() == reference.n_reported() && theta.m_actual() == reference.m_actual())
                    .then(|| theta.max_abs_diff(&reference)),
            });
            emit(ctx, a.out.as_deref(), json!({ "metric": "fidelity", "value": value, "details": details }))
        }
    }
}

