//! File formats owned by the CLI: score tables, histogram tables, JSON
//! documents and distribution specifiers.

use std::fs;
use std::path::{Path, PathBuf};

use pnr_pulsekit::analysis::poisson_dist;
use pnr_pulsekit::bundle::read_labels_csv;
use pnr_pulsekit::filter_ip::Histogram;
use pnr_pulsekit::pca::FactorScores;
use pnr_pulsekit::{distribution_from_labels, Label, PhotonDistribution};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Truncation used for analytic reference distributions when none is given.
pub const REFERENCE_TRUNCATION: usize = 40;

/// Relative output paths land in `out_dir`; absolute paths are kept.
pub fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

pub fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `score1,...,scoreN[,label]` with one row per trace.
pub fn write_scores_csv(path: &Path, scores: &FactorScores, labels: Option<&[Label]>) -> CliResult<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=scores.n_components()).map(|j| format!("score{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in scores.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].raw().to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads the `score*` columns of a score table; other columns are ignored.
pub fn read_scores_csv(path: &Path) -> CliResult<FactorScores> {
    let mut r = csv::Reader::from_path(path)?;
    let cols: Vec<usize> = r
        .headers()?
        .iter()
        .enumerate()
        .filter(|(_, h)| h.trim().starts_with("score"))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(CliError::Format(format!("{}: no score columns", path.display())));
    }
    let mut data = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for &c in &cols {
            let field = rec.get(c).unwrap_or("").trim();
            let v: f64 = field.parse().map_err(|_| {
                CliError::Format(format!("{}:{}: bad score {field:?}", path.display(), line + 2))
            })?;
            data.push(v);
        }
    }
    Ok(FactorScores::new(data, cols.len())?)
}

pub fn write_histogram_csv(path: &Path, h: &Histogram) -> CliResult<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_center", "raw_count", "smoothed_count"])?;
    for ((c, r), s) in h.bin_centers.iter().zip(&h.raw).zip(&h.smoothed) {
        w.write_record([c.to_string(), r.to_string(), s.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_labels(path: &Path) -> CliResult<Vec<Label>> {
    if !path.exists() {
        return Err(CliError::io(path, std::io::ErrorKind::NotFound.into()));
    }
    Ok(read_labels_csv(path)?)
}

/// Probability vector named by `source`: `poisson:MU`, a labels CSV
/// (unclassified traces dropped) or a distribution JSON.
pub fn read_probabilities(source: &str, truncation: Option<usize>) -> CliResult<Vec<f64>> {
    if let Some(mu) = source.strip_prefix("poisson:") {
        let mu: f64 = mu.parse().map_err(|_| CliError::config(format!("bad Poisson mean {mu:?}")))?;
        return Ok(poisson_dist(mu, truncation.unwrap_or(REFERENCE_TRUNCATION))?.probs);
    }
    let path = Path::new(source);
    let dist = if path.extension().is_some_and(|e| e == "csv") {
        let labels = read_labels(path)?;
        let top = pnr_pulsekit::distribution::max_label(&labels).unwrap_or(0);
        distribution_from_labels(&labels, truncation.unwrap_or(top).max(top), true)?
    } else {
        read_distribution(path)?
    };
    Ok(dist.probs().to_vec())
}

pub fn read_distribution(path: &Path) -> CliResult<PhotonDistribution> {
    let raw: serde_json::Value = read_json(path)?;
    #[derive(serde::Deserialize)]
    struct Doc {
        probs: Vec<f64>,
        #[serde(default)]
        unclassified: f64,
    }
    let doc: Doc = serde_json::from_value(raw).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    Ok(PhotonDistribution::with_unclassified(doc.probs, doc.unclassified)?)
}
