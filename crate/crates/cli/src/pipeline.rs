//! End-to-end runs driven by one JSON document.
//!
//! Stages run in a fixed order: simulate (or load input bundles), inner
//! product, KNN, PCA, clustering, analysis. Every seed the run uses is
//! resolved before the first stage and echoed in `run.json`, so the
//! manifest alone reproduces the artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pnr_pulsekit::analysis::{
    distribution_fidelity, herald_joint, herald_labels, poisson_dist, tmsv_joint_dist, tvd,
};
use pnr_pulsekit::bundle::{load_bundle, write_labels_csv};
use pnr_pulsekit::distribution::max_label;
use pnr_pulsekit::filter_ip::{classify_ip, ValleyParams};
use pnr_pulsekit::hdbscan::{HdbscanParams, DEFAULT_MERGE_GAP_FRACTION};
use pnr_pulsekit::knn;
use pnr_pulsekit::rng::sub_seed;
use pnr_pulsekit::simulator::{simulate, Simulated, SimulationConfig, SourceModel};
use pnr_pulsekit::{distribution_from_labels, Exec, Label, LabeledBatch, TraceBatch};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::commands::{self, label_summary, parse_feature_mode, parse_map_axis, read_config};
use crate::error::{CliError, CliResult};
use crate::io;

const SIMULATE_STREAM: u64 = 1;
const CALIBRATION_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    /// Relative to the config file's directory.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Seed defaults to one derived from `seed`.
    #[serde(default)]
    pub simulate: Option<SimulationConfig>,
    #[serde(default)]
    pub input: Option<InputStage>,
    #[serde(default)]
    pub classify_ip: Option<ValleyParams>,
    #[serde(default)]
    pub knn: Option<KnnStage>,
    #[serde(default)]
    pub pca: Option<PcaStage>,
    #[serde(default)]
    pub cluster: Option<ClusterStage>,
    #[serde(default)]
    pub analyze: AnalyzeStage,
}

/// Existing bundles instead of a simulation. Paths are relative to the
/// config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputStage {
    pub bundle: PathBuf,
    #[serde(default)]
    pub idler: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationLabels {
    /// Inner-product classification of the calibration traces.
    #[default]
    Ip,
    /// Labels stored with the calibration bundle.
    Truth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnStage {
    /// Calibration bundle; when absent one is simulated with the detector
    /// settings of `simulate` and a coherent source.
    #[serde(default)]
    pub calibration_bundle: Option<PathBuf>,
    #[serde(default = "default_calibration_mu")]
    pub calibration_mu: f64,
    #[serde(default = "default_calibration_rate")]
    pub calibration_rate_hz: f64,
    #[serde(default = "default_calibration_pulses")]
    pub calibration_pulses: usize,
    #[serde(default)]
    pub calibration_seed: Option<u64>,
    #[serde(default)]
    pub calibration_labels: CalibrationLabels,
    #[serde(default = "default_k")]
    pub k: usize,
    /// `full` or `pca:N`.
    #[serde(default = "default_features")]
    pub features: String,
    #[serde(default = "default_history_depth")]
    pub history_depth: usize,
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaStage {
    #[serde(default = "default_components")]
    pub components: usize,
    /// Fit on the first N traces; all when absent.
    #[serde(default)]
    pub fit_traces: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterStage {
    #[serde(default)]
    pub hdbscan: HdbscanParams,
    #[serde(default = "default_cluster_fit")]
    pub fit_traces: usize,
    #[serde(default = "default_merge_gap")]
    pub merge_gap_fraction: f64,
    /// `first-score` or `fitted`.
    #[serde(default = "default_map_axis")]
    pub map_axis: String,
    /// Manual cluster id to photon number map, applied to every channel.
    #[serde(default)]
    pub photon_map: Option<BTreeMap<usize, usize>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeStage {
    /// Truncation of the reported distributions; the largest label by default.
    #[serde(default)]
    pub truncation: Option<usize>,
    /// Idler photon numbers to herald on (pairs only).
    #[serde(default)]
    pub herald: Vec<usize>,
}

fn default_calibration_mu() -> f64 {
    3.82
}
fn default_calibration_rate() -> f64 {
    100e3
}
fn default_calibration_pulses() -> usize {
    20_000
}
fn default_k() -> usize {
    knn::DEFAULT_K
}
fn default_features() -> String {
    "full".into()
}
fn default_history_depth() -> usize {
    pnr_pulsekit::simulator::DEFAULT_HISTORY_DEPTH
}
fn default_components() -> usize {
    2
}
fn default_cluster_fit() -> usize {
    20_000
}
fn default_merge_gap() -> f64 {
    DEFAULT_MERGE_GAP_FRACTION
}
fn default_map_axis() -> String {
    "first-score".into()
}

impl PipelineConfig {
    /// Loads and validates a config; `seed` overrides the document's seed.
    /// Relative paths are rebased onto the config file's directory.
    pub fn load(path: &Path, seed: Option<u64>) -> CliResult<Self> {
        let mut doc: Value = read_config(path)?;
        if let (Some(s), Some(obj)) = (seed, doc.as_object_mut()) {
            obj.insert("seed".into(), json!(s));
        }
        // a simulate block without a seed gets one derived from the master seed
        let master = doc.get("seed").and_then(Value::as_u64).unwrap_or(0);
        if let Some(sim) = doc.get_mut("simulate").and_then(Value::as_object_mut) {
            sim.entry("seed").or_insert(json!(sub_seed(master, SIMULATE_STREAM)));
        }
        let mut cfg: PipelineConfig =
            serde_json::from_value(doc).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.out_dir.as_mut().map(rebase);
        if let Some(i) = cfg.input.as_mut() {
            rebase(&mut i.bundle);
            i.idler.as_mut().map(rebase);
        }
        if let Some(k) = cfg.knn.as_mut() {
            k.calibration_bundle.as_mut().map(rebase);
            k.calibration_seed.get_or_insert(sub_seed(cfg.seed, CALIBRATION_STREAM));
            k.shuffle_seed.get_or_insert(sub_seed(cfg.seed, SHUFFLE_STREAM));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        match (&self.simulate, &self.input) {
            (Some(_), Some(_)) => return Err(CliError::config("give either `simulate` or `input`, not both")),
            (None, None) => return Err(CliError::config("one of `simulate` or `input` is required")),
            _ => {}
        }
        if let Some(k) = &self.knn {
            parse_feature_mode(&k.features)?;
            if k.calibration_bundle.is_none() && self.simulate.is_none() {
                return Err(CliError::config("knn without `simulate` needs `calibration_bundle`"));
            }
        }
        if let Some(c) = &self.cluster {
            if self.pca.is_none() {
                return Err(CliError::config("the cluster stage needs a `pca` stage"));
            }
            parse_map_axis(&c.map_axis)?;
            c.hdbscan.validate().map_err(|e| CliError::config(e.to_string()))?;
        }
        if !self.analyze.herald.is_empty() && !self.is_paired() {
            return Err(CliError::config("heralding needs signal and idler channels"));
        }
        Ok(())
    }

    fn is_paired(&self) -> bool {
        match (&self.simulate, &self.input) {
            (Some(s), _) => matches!(s.source, SourceModel::Tmsv { .. }),
            (None, Some(i)) => i.idler.is_some(),
            _ => false,
        }
    }
}

/// One detector channel: `data` for a single source, `signal` and `idler`
/// for pairs.
struct Channel {
    name: &'static str,
    batch: TraceBatch,
    truth: Option<Vec<Label>>,
    /// method name -> labels
    labels: BTreeMap<&'static str, Vec<Label>>,
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    exec: Exec,
    report: Map<String, Value>,
    timing: Map<String, Value>,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        let t = Instant::now();
        log::info!("stage {stage}");
        let r = f(self)?;
        self.timing.insert(format!("{stage}_seconds"), json!(t.elapsed().as_secs_f64()));
        Ok(r)
    }

    fn load_channels(&mut self) -> CliResult<Vec<Channel>> {
        let chan = |name, b: LabeledBatch| {
            let (batch, truth) = b.into_parts();
            Channel { name, batch, truth: Some(truth), labels: BTreeMap::new() }
        };
        if let Some(sim) = &self.cfg.simulate {
            let out = simulate(sim, self.exec)?;
            commands::write_simulated(&out, &self.path("data"))?;
            return Ok(match out {
                Simulated::Single(b) => vec![chan("data", b)],
                Simulated::Pair { signal, idler } => vec![chan("signal", signal), chan("idler", idler)],
            });
        }
        let input = self.cfg.input.as_ref().expect("validated");
        let load = |name, p: &Path| -> CliResult<Channel> {
            let b = load_bundle(p)?;
            Ok(Channel { name, batch: b.batch, truth: b.labels, labels: BTreeMap::new() })
        };
        Ok(match &input.idler {
            None => vec![load("data", &input.bundle)?],
            Some(i) => vec![load("signal", &input.bundle)?, load("idler", i)?],
        })
    }

    fn classify_ip(&mut self, channels: &mut [Channel], params: &ValleyParams) -> CliResult<()> {
        let mut n = 0;
        for ch in channels.iter_mut() {
            let ip = classify_ip(&ch.batch, params, self.exec)?;
            commands::write_ip_artifacts(&ip, &self.path(&format!("ip.{}.labels.csv", ch.name)), &format!("ip.{}.", ch.name))?;
            ch.labels.insert("ip", ip.binning.labels);
            n += ch.batch.n_traces();
        }
        self.timing.insert("ip_traces".into(), json!(n));
        Ok(())
    }

    fn calibration(&mut self, stage: &KnnStage) -> CliResult<LabeledBatch> {
        let (batch, truth) = match (&stage.calibration_bundle, &self.cfg.simulate) {
            (Some(p), _) => {
                let b = load_bundle(p)?;
                (b.batch, b.labels)
            }
            (None, Some(sim)) => {
                let cfg = SimulationConfig {
                    source: SourceModel::Coherent { mu: stage.calibration_mu },
                    rep_rate_hz: stage.calibration_rate_hz,
                    n_pulses: stage.calibration_pulses,
                    seed: stage.calibration_seed.expect("resolved at load"),
                    ..sim.clone()
                };
                let Simulated::Single(b) = simulate(&cfg, self.exec)? else { unreachable!("coherent source") };
                commands::write_simulated(&Simulated::Single(b.clone()), &self.path("calibration"))?;
                let (batch, truth) = b.into_parts();
                (batch, Some(truth))
            }
            (None, None) => unreachable!("validated"),
        };
        let labels = match stage.calibration_labels {
            CalibrationLabels::Truth => {
                truth.ok_or_else(|| CliError::config("calibration bundle has no stored labels"))?
            }
            CalibrationLabels::Ip => {
                let params = self.cfg.classify_ip.unwrap_or_default();
                let ip = classify_ip(&batch, &params, self.exec)?;
                write_labels_csv(&self.path("calibration.ip.labels.csv"), ip.labels())?;
                ip.binning.labels
            }
        };
        Ok(LabeledBatch::new(batch, labels)?)
    }

    fn knn(&mut self, channels: &mut [Channel], stage: &KnnStage) -> CliResult<()> {
        let calib = self.time("knn_calibration", |r| r.calibration(stage))?;
        let target = channels[0].batch.meta().rep_rate();
        let features = parse_feature_mode(&stage.features)?;
        let model = self.time("knn_train", |r| {
            let training =
                knn::build_training_set(&calib, target, stage.history_depth, stage.shuffle_seed.expect("resolved"))?;
            let model = knn::fit_knn(&training, stage.k, features, r.exec)?;
            knn::save_model(&model, &r.path("knn.model"))?;
            Ok(model)
        })?;
        let t = Instant::now();
        let mut n = 0;
        for ch in channels.iter_mut() {
            let labels = model.predict(&ch.batch, self.exec)?;
            write_labels_csv(&self.path(&format!("knn.{}.labels.csv", ch.name)), &labels)?;
            n += labels.len();
            ch.labels.insert("knn", labels);
        }
        let secs = t.elapsed().as_secs_f64();
        self.timing.insert("knn_predict_seconds".into(), json!(secs));
        self.timing.insert("knn_us_per_trace".into(), json!(secs * 1e6 / n.max(1) as f64));
        Ok(())
    }

    fn pca_and_cluster(&mut self, channels: &mut [Channel], pca: &PcaStage) -> CliResult<()> {
        let mut scores = Vec::new();
        self.time("pca", |r| {
            for ch in channels.iter() {
                let model = commands::fit_pca(&ch.batch, pca.fit_traces)?;
                io::write_json(&r.path(&format!("pca.{}.pca.json", ch.name)), &model)?;
                let s = model.transform(&ch.batch, pca.components, r.exec)?;
                io::write_scores_csv(&r.path(&format!("pca.{}.scores.csv", ch.name)), &s, ch.truth.as_deref())?;
                r.report.insert(
                    format!("pca_{}", ch.name),
                    json!({ "explained_variance_ratio": commands::explained_variance(&model, pca.components) }),
                );
                scores.push(s);
            }
            Ok(())
        })?;
        let Some(stage) = &self.cfg.cluster else { return Ok(()) };
        let t = Instant::now();
        let (mut predicted, mut predict_secs) = (0, 0.0);
        for (ch, s) in channels.iter_mut().zip(&scores) {
            let run = commands::run_cluster(
                s,
                Some(stage.fit_traces),
                &stage.hdbscan,
                stage.photon_map.clone(),
                parse_map_axis(&stage.map_axis)?,
                stage.merge_gap_fraction,
                self.exec,
            )?;
            run.model.save(&self.path(&format!("cluster.{}.hdb", ch.name)))?;
            write_labels_csv(&self.path(&format!("cluster.{}.labels.csv", ch.name)), &run.labels)?;
            self.report.insert(
                format!("cluster_{}", ch.name),
                json!({
                    "n_clusters": run.model.n_clusters(),
                    "noise_fraction": run.model.noise_fraction(),
                    "photon_map": run.model.photon_map,
                    "warnings": run.model.warnings,
                }),
            );
            predicted += run.n_predicted;
            predict_secs += run.predict_seconds;
            ch.labels.insert("cluster", run.labels);
        }
        self.timing.insert("cluster_seconds".into(), json!(t.elapsed().as_secs_f64()));
        if predicted > 0 {
            self.timing.insert("cluster_us_per_trace".into(), json!(predict_secs * 1e6 / predicted as f64));
        }
        Ok(())
    }

    /// Analytic photon statistics of the first channel, if known.
    fn reference(&self, truncation: usize) -> CliResult<Option<(Value, Vec<f64>)>> {
        let Some(sim) = &self.cfg.simulate else { return Ok(None) };
        let m = truncation.max(io::REFERENCE_TRUNCATION);
        Ok(Some(match sim.source {
            SourceModel::Coherent { mu } => (json!({ "kind": "poisson", "mu": mu }), poisson_dist(mu, m)?.probs),
            SourceModel::Tmsv { lambda, eta_signal, eta_idler } => (
                json!({ "kind": "tmsv_signal_marginal", "lambda": lambda, "eta_signal": eta_signal, "eta_idler": eta_idler }),
                tmsv_joint_dist(lambda, eta_signal, eta_idler, m)?.signal_marginal(),
            ),
        }))
    }

    fn analyze(&mut self, channels: &[Channel]) -> CliResult<()> {
        let top = channels
            .iter()
            .flat_map(|c| c.labels.values().chain(c.truth.as_ref()))
            .filter_map(|l| max_label(l))
            .max()
            .unwrap_or(0);
        let trunc = self.cfg.analyze.truncation.unwrap_or(top).max(top);
        let reference = self.reference(trunc)?;
        let mut tvd_table = Vec::new();
        let mut fidelity_table = Vec::new();
        let mut methods = Map::new();
        for ch in channels {
            let truth_dist = ch.truth.as_deref().map(|t| distribution_from_labels(t, trunc, true)).transpose()?;
            for (method, labels) in &ch.labels {
                let mut summary = label_summary(labels, ch.truth.as_deref())?;
                let dist = distribution_from_labels(labels, trunc, true)?;
                summary["distribution"] = json!(dist.probs());
                if let Some(t) = &truth_dist {
                    tvd_table.push(json!({ "channel": ch.name, "method": method, "against": "truth", "value": tvd(dist.probs(), t.probs()) }));
                }
                // the analytic reference describes the first channel (data or signal)
                if let Some((_, r)) = reference.as_ref().filter(|_| ch.name != "idler") {
                    tvd_table.push(json!({ "channel": ch.name, "method": method, "against": "reference", "value": tvd(dist.probs(), r) }));
                    fidelity_table.push(json!({ "channel": ch.name, "method": method, "against": "reference", "value": distribution_fidelity(dist.probs(), r) }));
                }
                methods.insert(format!("{}.{}", ch.name, method), summary);
            }
            if let (Some(t), Some((_, r))) = (&truth_dist, reference.as_ref().filter(|_| ch.name != "idler")) {
                tvd_table.push(json!({ "channel": ch.name, "method": "truth", "against": "reference", "value": tvd(t.probs(), r) }));
            }
            if let Some(t) = &truth_dist {
                methods.insert(format!("{}.truth", ch.name), json!({ "distribution": t.probs() }));
            }
        }
        self.report.insert("truncation".into(), json!(trunc));
        if let Some((desc, r)) = &reference {
            self.report.insert("reference".into(), json!({ "source": desc, "distribution": &r[..=trunc.min(r.len() - 1)] }));
        }
        self.report.insert("methods".into(), Value::Object(methods));
        self.report.insert("tvd".into(), json!(tvd_table));
        self.report.insert("fidelity".into(), json!(fidelity_table));
        if !self.cfg.analyze.herald.is_empty() {
            let heralded = self.herald(channels, trunc)?;
            self.report.insert("heralded".into(), json!(heralded));
        }
        Ok(())
    }

    fn herald(&self, channels: &[Channel], trunc: usize) -> CliResult<Vec<Value>> {
        let (signal, idler) = (&channels[0], &channels[1]);
        let joint = match self.cfg.simulate.as_ref().map(|s| s.source) {
            Some(SourceModel::Tmsv { lambda, eta_signal, eta_idler }) => {
                Some(tmsv_joint_dist(lambda, eta_signal, eta_idler, trunc.max(io::REFERENCE_TRUNCATION))?)
            }
            _ => None,
        };
        let mut rows = Vec::new();
        let mut sources: Vec<(&str, &[Label], &[Label])> =
            signal.labels.iter().filter_map(|(m, s)| Some((*m, s.as_slice(), idler.labels.get(m)?.as_slice()))).collect();
        if let (Some(s), Some(i)) = (&signal.truth, &idler.truth) {
            sources.push(("truth", s, i));
        }
        for &n in &self.cfg.analyze.herald {
            for (method, s, i) in &sources {
                let mut row = json!({ "n_idler": n, "method": method });
                match herald_labels(s, i, n, Some(trunc)) {
                    Ok(d) => {
                        row["distribution"] = json!(d.probs());
                        row["events"] = json!(s.iter().zip(*i).filter(|(a, b)| !a.is_unclassified() && b.count() == Some(n)).count());
                        if let Some(j) = &joint {
                            let r = herald_joint(j, n)?;
                            row["fidelity"] = json!(distribution_fidelity(d.probs(), r.probs()));
                            row["tvd"] = json!(tvd(d.probs(), r.probs()));
                        }
                    }
                    Err(e) => row["error"] = json!(e.code()),
                }
                rows.push(row);
            }
        }
        Ok(rows)
    }
}

/// Hashes of every file in `dir` except the manifest, keyed by relative path.
fn artifact_hashes(dir: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| CliError::io(&d, e))? {
            let p = entry.map_err(|e| CliError::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().into_owned();
                if rel != "run.json" {
                    out.insert(rel, io::sha256_file(&p)?);
                }
            }
        }
    }
    Ok(out)
}

fn write_manifest(out: &Path, cfg: &PipelineConfig, status: &str) -> CliResult<()> {
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "status": status,
        "config": cfg,
        "artifacts": artifact_hashes(out)?,
    });
    io::write_json(&out.join("run.json"), &manifest)
}

/// Runs every declared stage. On failure `error.json` and `run.json` are
/// written next to whatever artifacts were already produced.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path, exec: Exec) -> CliResult<Value> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let _ = std::fs::remove_file(out.join("error.json"));
    let mut run = Run { cfg, out: out.to_path_buf(), exec, report: Map::new(), timing: Map::new() };
    match run.stages() {
        Ok(()) => {
            let mut report = std::mem::take(&mut run.report);
            report.insert("timing".into(), Value::Object(std::mem::take(&mut run.timing)));
            let report = Value::Object(report);
            io::write_json(&out.join("report.json"), &report)?;
            write_manifest(out, cfg, "ok")?;
            Ok(json!({ "out_dir": out, "report": out.join("report.json"), "status": "ok" }))
        }
        Err(e) => {
            io::write_json(&out.join("error.json"), &e.to_json())?;
            write_manifest(out, cfg, "failed")?;
            Err(e)
        }
    }
}

impl Run<'_> {
    fn stages(&mut self) -> CliResult<()> {
        let cfg = self.cfg;
        let mut channels = self.time("load", |r| r.load_channels())?;
        let n: usize = channels.iter().map(|c| c.batch.n_traces()).sum();
        self.report.insert(
            "channels".into(),
            json!(channels.iter().map(|c| json!({ "name": c.name, "n_traces": c.batch.n_traces(), "rep_rate_hz": c.batch.meta().rep_rate() })).collect::<Vec<_>>()),
        );
        if let Some(p) = &cfg.classify_ip {
            self.time("classify_ip", |r| r.classify_ip(&mut channels, p))?;
            if let Some(s) = self.timing.get("classify_ip_seconds").and_then(Value::as_f64) {
                self.timing.insert("ip_us_per_trace".into(), json!(s * 1e6 / n.max(1) as f64));
            }
        }
        if let Some(k) = &cfg.knn {
            self.knn(&mut channels, k)?;
        }
        if let Some(p) = &cfg.pca {
            self.pca_and_cluster(&mut channels, p)?;
        }
        self.time("analyze", |r| r.analyze(&channels))
    }
}
