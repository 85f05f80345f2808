//! On-disk trace bundles.
//!
//! A bundle named `run` is three sibling files:
//!
//! * `run.meta.json`: acquisition metadata and shape,
//! * `run.traces.bin`: little-endian `f32` samples, row-major,
//! * `run.labels.csv`: one integer per line, `-1` for UNCLASSIFIED (only if `has_labels`).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{AcquisitionMeta, Label, LabeledBatch, TraceBatch};

pub const BUNDLE_VERSION: u32 = 1;
const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleMeta {
    version: u32,
    sample_rate_hz: f64,
    rep_rate_hz: f64,
    samples_per_trace: usize,
    n_traces: usize,
    adc_range_v: f64,
    dtype: String,
    has_labels: bool,
}

/// A loaded bundle; labels are present iff the bundle was saved with them.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub batch: TraceBatch,
    pub labels: Option<Vec<Label>>,
}

impl Bundle {
    pub fn into_labeled(self) -> Result<LabeledBatch> {
        let labels = self
            .labels
            .ok_or_else(|| Error::Format("bundle carries no labels".into()))?;
        LabeledBatch::new(self.batch, labels)
    }
}

/// Strips a known bundle suffix so `run`, `run.meta.json` and `run.traces.bin`
/// all name the same bundle.
pub fn bundle_base(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for suffix in [".meta.json", ".traces.bin", ".labels.csv"] {
        if let Some(stripped) = s.strip_suffix(suffix) {
            return PathBuf::from(stripped);
        }
    }
    path.to_path_buf()
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn meta_path(base: &Path) -> PathBuf {
    with_suffix(&bundle_base(base), ".meta.json")
}

pub fn traces_path(base: &Path) -> PathBuf {
    with_suffix(&bundle_base(base), ".traces.bin")
}

pub fn labels_path(base: &Path) -> PathBuf {
    with_suffix(&bundle_base(base), ".labels.csv")
}

pub fn save_bundle(batch: &TraceBatch, labels: Option<&[Label]>, path: &Path) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != batch.n_traces() {
            return Err(Error::LengthMismatch { expected: batch.n_traces(), actual: l.len() });
        }
    }
    let m = batch.meta();
    let meta = BundleMeta {
        version: BUNDLE_VERSION,
        sample_rate_hz: m.sample_rate(),
        rep_rate_hz: m.rep_rate(),
        samples_per_trace: m.samples_per_trace(),
        n_traces: batch.n_traces(),
        adc_range_v: m.adc_range(),
        dtype: DTYPE.to_string(),
        has_labels: labels.is_some(),
    };
    fs::write(meta_path(path), serde_json::to_string_pretty(&meta)?)?;
    write_f32_le(&traces_path(path), batch.as_slice())?;
    if let Some(l) = labels {
        write_labels_csv(&labels_path(path), l)?;
    }
    Ok(())
}

pub fn save_labeled(labeled: &LabeledBatch, path: &Path) -> Result<()> {
    save_bundle(labeled.batch(), Some(labeled.labels()), path)
}

pub fn load_bundle(path: &Path) -> Result<Bundle> {
    let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(meta_path(path))?)
        .map_err(|e| Error::Format(format!("{}: {e}", meta_path(path).display())))?;
    if meta.version != BUNDLE_VERSION {
        return Err(Error::Format(format!("unsupported bundle version {}", meta.version)));
    }
    if meta.dtype != DTYPE {
        return Err(Error::Format(format!("unsupported dtype {:?}", meta.dtype)));
    }
    let acq = AcquisitionMeta::new(meta.sample_rate_hz, meta.rep_rate_hz, meta.adc_range_v)
        .map_err(|e| Error::Format(e.to_string()))?;
    if acq.samples_per_trace() != meta.samples_per_trace {
        return Err(Error::Format(format!(
            "samples_per_trace {} disagrees with sample/rep rate ({})",
            meta.samples_per_trace,
            acq.samples_per_trace()
        )));
    }
    let data = read_f32_le(&traces_path(path))?;
    let expected = meta.n_traces * meta.samples_per_trace;
    if meta.n_traces == 0 || data.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} values, header declares {} x {}",
            data.len(),
            meta.n_traces,
            meta.samples_per_trace
        )));
    }
    let batch = TraceBatch::new(data, acq).map_err(|e| Error::Format(e.to_string()))?;
    let labels = if meta.has_labels {
        let l = read_labels_csv(&labels_path(path))?;
        if l.len() != meta.n_traces {
            return Err(Error::Format(format!(
                "{} labels for {} traces",
                l.len(),
                meta.n_traces
            )));
        }
        Some(l)
    } else {
        None
    };
    Ok(Bundle { batch, labels })
}

pub fn write_f32_le(path: &Path, values: &[f32]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_f32_le(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "{}: {} bytes is not a whole number of f32 values",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_labels_csv(path: &Path, labels: &[Label]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for l in labels {
        writeln!(w, "{}", l.raw())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<Label>> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let raw: i64 = t
            .parse()
            .map_err(|_| Error::Format(format!("{}:{}: bad label {t:?}", path.display(), i + 1)))?;
        out.push(Label::from_raw(raw)?);
    }
    Ok(out)
}
