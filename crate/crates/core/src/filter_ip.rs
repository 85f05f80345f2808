//! Inner-product pulse filtering: project each trace on the batch-mean
//! reference and split the projections at the valleys of their histogram.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par::{self, Exec};
use crate::trace::{Label, TraceBatch, VoltageTrace, MAX_PHOTONS};

/// Element-wise mean over the traces of a batch.
pub fn reference_trace(batch: &TraceBatch) -> VoltageTrace {
    let w = batch.samples_per_trace();
    let mut acc = vec![0f64; w];
    for row in batch.rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v as f64;
        }
    }
    let n = batch.n_traces() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    VoltageTrace::new(acc).expect("mean of finite samples is finite")
}

/// `out[i] = <trace_i, reference>`.
pub fn inner_products(batch: &TraceBatch, reference: &VoltageTrace, exec: Exec) -> Result<Vec<f64>> {
    if reference.len() != batch.samples_per_trace() {
        return Err(Error::LengthMismatch {
            expected: batch.samples_per_trace(),
            actual: reference.len(),
        });
    }
    let r = reference.samples();
    Ok(par::map_indexed(exec, batch.n_traces(), |i| {
        batch.row(i).iter().zip(r).map(|(&v, &q)| v as f64 * q).sum()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValleyParams {
    pub n_bins: usize,
    /// Width, in bins, of the centred moving average.
    pub smoothing_window: usize,
    /// Peaks whose prominence (height above the higher adjacent base) is
    /// below this fraction of the tallest peak are ignored.
    pub min_prominence_fraction: f64,
}

impl Default for ValleyParams {
    fn default() -> Self {
        Self { n_bins: 200, smoothing_window: 5, min_prominence_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_centers: Vec<f64>,
    pub raw: Vec<u64>,
    pub smoothed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValleyBinning {
    pub labels: Vec<Label>,
    /// Ascending class boundaries; class `k` holds values in `(t[k-1], t[k]]`.
    pub thresholds: Vec<f64>,
    /// Bin index of every retained peak.
    pub peaks: Vec<usize>,
    pub histogram: Histogram,
}

fn smooth(counts: &[u64], window: usize) -> Vec<f64> {
    let n = counts.len() as isize;
    let w = window.max(1) as isize;
    let lo = w / 2;
    (0..n)
        .map(|i| {
            let a = (i - lo).max(0);
            let b = (i - lo + w - 1).min(n - 1);
            (a..=b).map(|j| counts[j as usize] as f64).sum::<f64>() / w as f64
        })
        .collect()
}

/// Local maxima of `h`, treating a flat run as one peak centred on the run.
fn find_peaks(h: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < h.len() {
        let mut j = i;
        while j + 1 < h.len() && h[j + 1] == h[i] {
            j += 1;
        }
        let left_lower = i == 0 || h[i - 1] < h[i];
        let right_lower = j + 1 == h.len() || h[j + 1] < h[i];
        if h[i] > 0.0 && left_lower && right_lower {
            peaks.push((i + j) / 2);
        }
        i = j + 1;
    }
    peaks
}

/// Height of peak `p` above the higher of its two bases, each base being the
/// lowest point before the curve rises above the peak. Counts beyond the
/// histogram range are zero.
fn prominence(h: &[f64], p: usize) -> f64 {
    let base = |it: &mut dyn Iterator<Item = usize>| {
        let mut low = h[p];
        for i in it {
            if h[i] > h[p] {
                return low;
            }
            low = low.min(h[i]);
        }
        0.0
    };
    let left = base(&mut (0..p).rev());
    let right = base(&mut (p + 1..h.len()));
    h[p] - left.max(right)
}

/// Labels values by histogram valleys, smallest values first.
pub fn bin_by_valleys(values: &[f64], params: &ValleyParams) -> Result<ValleyBinning> {
    if values.len() < 2 {
        return Err(invalid("need at least two values to bin"));
    }
    if params.n_bins == 0 || params.smoothing_window == 0 {
        return Err(invalid("n_bins and smoothing_window must be positive"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("values must be finite"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_bins = params.n_bins;
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
    let bin_of = |v: f64| (((v - lo) / width) as usize).min(n_bins - 1);

    let mut raw = vec![0u64; n_bins];
    for &v in values {
        raw[bin_of(v)] += 1;
    }
    let smoothed = smooth(&raw, params.smoothing_window);
    let candidates = find_peaks(&smoothed);
    let tallest = candidates.iter().map(|&p| smoothed[p]).fold(0.0, f64::max);
    let peaks: Vec<usize> = candidates
        .into_iter()
        .filter(|&p| prominence(&smoothed, p) >= params.min_prominence_fraction * tallest)
        .collect();
    if peaks.is_empty() {
        return Err(Error::NoPeaks);
    }
    if peaks.len() > MAX_PHOTONS {
        return Err(invalid(format!("{} peaks exceed the label ceiling", peaks.len())));
    }

    let thresholds: Vec<f64> = peaks
        .windows(2)
        .map(|pair| {
            let (a, b) = (pair[0], pair[1]);
            let min_i = (a..=b)
                .min_by(|&x, &y| smoothed[x].total_cmp(&smoothed[y]))
                .expect("non-empty range");
            let mut end = min_i;
            while end < b && smoothed[end + 1] == smoothed[min_i] {
                end += 1;
            }
            lo + (min_i + end + 1) as f64 * width / 2.0
        })
        .collect();

    let labels = values
        .iter()
        .map(|&v| Label::photons(thresholds.partition_point(|&t| t < v)))
        .collect();
    let bin_centers = (0..n_bins).map(|i| lo + (i as f64 + 0.5) * width).collect();
    Ok(ValleyBinning {
        labels,
        thresholds,
        peaks,
        histogram: Histogram { bin_centers, raw, smoothed },
    })
}

/// Output of the full inner-product classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct IpClassification {
    pub reference: VoltageTrace,
    pub inner_products: Vec<f64>,
    pub binning: ValleyBinning,
}

impl IpClassification {
    pub fn labels(&self) -> &[Label] {
        &self.binning.labels
    }
}

pub fn classify_ip(batch: &TraceBatch, params: &ValleyParams, exec: Exec) -> Result<IpClassification> {
    let reference = reference_trace(batch);
    let inner_products = inner_products(batch, &reference, exec)?;
    let binning = bin_by_valleys(&inner_products, params)?;
    Ok(IpClassification { reference, inner_products, binning })
}
