//! Supervised photon-number classification by K-nearest-neighbour vote.
//!
//! Training data for a high repetition rate is emulated from labelled
//! low-rate calibration traces: each emulated window is the sum of the
//! current calibration trace and the tails of its predecessors.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bundle::{read_f32_le, read_labels_csv, write_f32_le, write_labels_csv};
use crate::error::{invalid, Error, Result};
use crate::neighbors::{Neighbor, NeighborIndex};
use crate::par::{self, Exec};
use crate::pca::PcaModel;
use crate::rng::rng_from_seed;
use crate::trace::{AcquisitionMeta, Label, LabeledBatch, TraceBatch};

pub const DEFAULT_K: usize = 5;
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    FullTrace,
    /// Leading `N` PCA factor scores.
    PcaScores(usize),
}

impl FromStr for FeatureMode {
    type Err = Error;

    /// Parses `full` or `pca:N`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "full" => Ok(FeatureMode::FullTrace),
            Some(("pca", n)) => match n.parse::<usize>() {
                Ok(n) if n > 0 => Ok(FeatureMode::PcaScores(n)),
                _ => Err(invalid(format!("bad PCA component count {n:?}"))),
            },
            _ => Err(invalid(format!("feature mode must be `full` or `pca:N`, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureMode::FullTrace => write!(f, "full"),
            FeatureMode::PcaScores(n) => write!(f, "pca:{n}"),
        }
    }
}

/// Emulates `calib` at `target_rep_rate` by overlapping shuffled traces.
///
/// Emulated trace `k` is `sum_j calib[k-j][j*L' .. (j+1)*L']` for
/// `j = 0..=history_depth` and keeps the label of `calib[k]`. The first
/// `history_depth` traces lack a full history and are dropped.
pub fn build_training_set(
    calib: &LabeledBatch,
    target_rep_rate: f64,
    history_depth: usize,
    shuffle_seed: u64,
) -> Result<LabeledBatch> {
    let n = calib.batch().n_traces();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(shuffle_seed));
    overlap_in_order(calib, &order, target_rep_rate, history_depth)
}

fn overlap_in_order(
    calib: &LabeledBatch,
    order: &[usize],
    target_rep_rate: f64,
    history_depth: usize,
) -> Result<LabeledBatch> {
    let meta = calib.batch().meta();
    if !(target_rep_rate > meta.rep_rate()) {
        return Err(Error::RateNotHigher { target: target_rep_rate, calib: meta.rep_rate() });
    }
    if calib.labels().iter().any(|l| l.is_unclassified()) {
        return Err(invalid("calibration labels must not contain U"));
    }
    let n = order.len();
    if n <= history_depth {
        return Err(Error::InsufficientTraces { available: n, history_depth });
    }
    let out_meta = AcquisitionMeta::new(meta.sample_rate(), target_rep_rate, meta.adc_range())?;
    let window = out_meta.samples_per_trace();
    let needed = (history_depth + 1) * window;
    if meta.samples_per_trace() < needed {
        return Err(invalid(format!(
            "calibration traces hold {} samples; {} are needed for history depth {history_depth}",
            meta.samples_per_trace(),
            needed
        )));
    }
    let adc = meta.adc_range();
    let batch = calib.batch();
    let rows = par::map_indexed(Exec::Parallel, n - history_depth, |r| {
        let k = r + history_depth;
        let mut acc = vec![0f64; window];
        for j in 0..=history_depth {
            let src = &batch.row(order[k - j])[j * window..(j + 1) * window];
            for (a, &s) in acc.iter_mut().zip(src) {
                *a += s as f64;
            }
        }
        acc.into_iter().map(|v| v.clamp(-adc, adc) as f32).collect::<Vec<f32>>()
    });
    let labels = order[history_depth..].iter().map(|&i| calib.labels()[i]).collect();
    LabeledBatch::new(TraceBatch::new(rows.concat(), out_meta)?, labels)
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    feature_mode: FeatureMode,
    pca: Option<PcaModel>,
    input_meta: AcquisitionMeta,
    feature_dim: usize,
    features: Vec<f32>,
    labels: Vec<Label>,
    index: NeighborIndex,
}

/// Stores the training features; no iterative training.
pub fn fit_knn(training: &LabeledBatch, k: usize, feature_mode: FeatureMode, exec: Exec) -> Result<KnnModel> {
    let batch = training.batch();
    let n = batch.n_traces();
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::KTooLarge { k, n_train: n });
    }
    if training.labels().iter().any(|l| l.is_unclassified()) {
        return Err(invalid("training labels must not contain U"));
    }
    let (pca, features, feature_dim) = match feature_mode {
        FeatureMode::FullTrace => (None, batch.as_slice().to_vec(), batch.samples_per_trace()),
        FeatureMode::PcaScores(c) => {
            let model = PcaModel::fit(batch)?;
            let scores = model.transform(batch, c, exec)?;
            let f = scores.as_slice().iter().map(|&v| v as f32).collect();
            (Some(model), f, c)
        }
    };
    KnnModel::assemble(k, feature_mode, pca, *batch.meta(), feature_dim, features, training.labels().to_vec())
}

impl KnnModel {
    fn assemble(
        k: usize,
        feature_mode: FeatureMode,
        pca: Option<PcaModel>,
        input_meta: AcquisitionMeta,
        feature_dim: usize,
        features: Vec<f32>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        if feature_dim == 0 || features.len() != labels.len() * feature_dim || labels.is_empty() {
            return Err(Error::Format("feature matrix does not match labels".into()));
        }
        if k == 0 || k > labels.len() {
            return Err(Error::KTooLarge { k, n_train: labels.len() });
        }
        let wide: Vec<f64> = features.iter().map(|&v| v as f64).collect();
        let index = NeighborIndex::new(&wide, feature_dim);
        Ok(KnnModel { k, feature_mode, pca, input_meta, feature_dim, features, labels, index })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn feature_mode(&self) -> FeatureMode {
        self.feature_mode
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_train(&self) -> usize {
        self.labels.len()
    }

    pub fn training_labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn input_meta(&self) -> &AcquisitionMeta {
        &self.input_meta
    }

    fn features_of(&self, trace: &[f32], out: &mut [f64]) {
        match &self.pca {
            Some(p) => p.project_into(trace, out),
            None => out.iter_mut().zip(trace).for_each(|(o, &v)| *o = v as f64),
        }
    }

    /// Label of one trace; see [`vote`].
    pub fn predict_one(&self, trace: &[f32]) -> Result<Label> {
        if trace.len() != self.input_meta.samples_per_trace() {
            return Err(Error::LengthMismatch { expected: self.input_meta.samples_per_trace(), actual: trace.len() });
        }
        let mut q = vec![0f64; self.feature_dim];
        self.features_of(trace, &mut q);
        Ok(vote(&self.index.k_nearest(&q, self.k), &self.labels))
    }

    pub fn predict(&self, batch: &TraceBatch, exec: Exec) -> Result<Vec<Label>> {
        let expected = self.input_meta.samples_per_trace();
        if batch.samples_per_trace() != expected {
            return Err(Error::LengthMismatch { expected, actual: batch.samples_per_trace() });
        }
        Ok(par::map_indexed(exec, batch.n_traces(), |i| {
            let mut q = vec![0f64; self.feature_dim];
            self.features_of(batch.row(i), &mut q);
            vote(&self.index.k_nearest(&q, self.k), &self.labels)
        }))
    }
}

/// Majority label among `neighbors`; ties go to the label with the smaller
/// summed distance, then to the smaller label.
pub fn vote(neighbors: &[Neighbor], labels: &[Label]) -> Label {
    let mut tally: Vec<(Label, usize, f64)> = Vec::with_capacity(neighbors.len());
    for nb in neighbors {
        let l = labels[nb.index];
        let d = nb.dist2.sqrt();
        match tally.iter_mut().find(|t| t.0 == l) {
            Some(t) => {
                t.1 += 1;
                t.2 += d;
            }
            None => tally.push((l, 1, d)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|t| t.0)
        .unwrap_or(Label::UNCLASSIFIED)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    version: u32,
    k: usize,
    feature_mode: FeatureMode,
    feature_dim: usize,
    n_train: usize,
    input_meta: AcquisitionMeta,
    dtype: String,
    pca: Option<PcaModel>,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `path` (JSON header) plus `path.features.bin` and `path.labels.csv`.
pub fn save_model(model: &KnnModel, path: &Path) -> Result<()> {
    let header = ModelHeader {
        version: MODEL_VERSION,
        k: model.k,
        feature_mode: model.feature_mode,
        feature_dim: model.feature_dim,
        n_train: model.n_train(),
        input_meta: model.input_meta,
        dtype: "f32le".into(),
        pca: model.pca.clone(),
    };
    fs::write(path, serde_json::to_string_pretty(&header)?)?;
    write_f32_le(&sibling(path, ".features.bin"), &model.features)?;
    write_labels_csv(&sibling(path, ".labels.csv"), &model.labels)
}

pub fn load_model(path: &Path) -> Result<KnnModel> {
    let header: ModelHeader = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if header.version != MODEL_VERSION || header.dtype != "f32le" {
        return Err(Error::Format(format!("unsupported model version {} / dtype {}", header.version, header.dtype)));
    }
    let features = read_f32_le(&sibling(path, ".features.bin"))?;
    let labels = read_labels_csv(&sibling(path, ".labels.csv"))?;
    if labels.len() != header.n_train {
        return Err(Error::Format(format!("{} labels, header declares {}", labels.len(), header.n_train)));
    }
    let expected_pca = matches!(header.feature_mode, FeatureMode::PcaScores(_));
    if expected_pca != header.pca.is_some() {
        return Err(Error::Format("PCA model presence disagrees with feature mode".into()));
    }
    KnnModel::assemble(
        header.k,
        header.feature_mode,
        header.pca,
        header.input_meta,
        header.feature_dim,
        features,
        labels,
    )
}
