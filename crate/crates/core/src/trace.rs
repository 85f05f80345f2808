//! Trace containers and stream segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Hard ceiling on photon-number labels; every classified label is below it.
pub const MAX_PHOTONS: usize = 64;

/// Photon-number label. Negative values encode the UNCLASSIFIED sentinel
/// (written as `-1` on disk).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(i32);

impl Label {
    pub const UNCLASSIFIED: Label = Label(-1);

    pub fn photons(n: usize) -> Label {
        assert!(n < MAX_PHOTONS, "photon number {n} exceeds label ceiling");
        Label(n as i32)
    }

    /// Parses the on-disk integer encoding.
    pub fn from_raw(raw: i64) -> Result<Label> {
        match raw {
            -1 => Ok(Label::UNCLASSIFIED),
            n if (0..MAX_PHOTONS as i64).contains(&n) => Ok(Label(n as i32)),
            n => Err(Error::Format(format!("label {n} outside -1..{MAX_PHOTONS}"))),
        }
    }

    pub fn raw(self) -> i32 {
        self.0
    }

    pub fn count(self) -> Option<usize> {
        (self.0 >= 0).then_some(self.0 as usize)
    }

    pub fn is_unclassified(self) -> bool {
        self.0 < 0
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.count() {
            Some(n) => write!(f, "{n}"),
            None => write!(f, "U"),
        }
    }
}

/// Digitiser settings shared by every trace of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionMeta {
    sample_rate: f64,
    rep_rate: f64,
    samples_per_trace: usize,
    adc_range: f64,
}

impl AcquisitionMeta {
    /// Builds metadata with `samples_per_trace = floor(sample_rate / rep_rate)`.
    pub fn new(sample_rate: f64, rep_rate: f64, adc_range: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid(format!("sample rate must be positive, got {sample_rate}")));
        }
        if !(rep_rate.is_finite() && rep_rate > 0.0) {
            return Err(invalid(format!("repetition rate must be positive, got {rep_rate}")));
        }
        if !(adc_range.is_finite() && adc_range > 0.0) {
            return Err(invalid(format!("ADC range must be positive, got {adc_range}")));
        }
        let samples_per_trace = samples_per_period(sample_rate, rep_rate);
        if samples_per_trace < 2 {
            return Err(invalid(format!(
                "{sample_rate} S/s at {rep_rate} Hz leaves {samples_per_trace} samples per trace"
            )));
        }
        Ok(Self { sample_rate, rep_rate, samples_per_trace, adc_range })
    }

    /// Same metadata at a different repetition rate.
    pub fn with_rep_rate(&self, rep_rate: f64) -> Result<Self> {
        Self::new(self.sample_rate, rep_rate, self.adc_range)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn rep_rate(&self) -> f64 {
        self.rep_rate
    }

    pub fn samples_per_trace(&self) -> usize {
        self.samples_per_trace
    }

    pub fn adc_range(&self) -> f64 {
        self.adc_range
    }

    /// Pulse period in seconds.
    pub fn period(&self) -> f64 {
        1.0 / self.rep_rate
    }
}

// floor() with a relative guard so 20e6/800e3 never lands on 24.999...
fn samples_per_period(sample_rate: f64, rep_rate: f64) -> usize {
    let ratio = sample_rate / rep_rate;
    (ratio * (1.0 + 1e-12)).floor() as usize
}

/// One digitised window, in volts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageTrace {
    samples: Vec<f64>,
}

impl VoltageTrace {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(invalid("trace contains a non-finite sample"));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}

/// Row-major `n_traces x samples_per_trace` matrix of volts.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceBatch {
    data: Vec<f32>,
    n_traces: usize,
    meta: AcquisitionMeta,
}

impl TraceBatch {
    pub fn new(data: Vec<f32>, meta: AcquisitionMeta) -> Result<Self> {
        let width = meta.samples_per_trace();
        if data.is_empty() || data.len() % width != 0 {
            return Err(Error::LengthMismatch {
                expected: width * (data.len() / width).max(1),
                actual: data.len(),
            });
        }
        let limit = meta.adc_range() as f32;
        for &s in &data {
            if !s.is_finite() {
                return Err(invalid("trace contains a non-finite sample"));
            }
            if s.abs() > limit {
                return Err(invalid(format!("sample {s} V outside ADC range +/-{limit} V")));
            }
        }
        Ok(Self { n_traces: data.len() / width, data, meta })
    }

    /// Builds a batch from f64 rows, rounding to storage precision.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], meta: AcquisitionMeta) -> Result<Self> {
        let width = meta.samples_per_trace();
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in rows {
            let r = r.as_ref();
            if r.len() != width {
                return Err(Error::LengthMismatch { expected: width, actual: r.len() });
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(data, meta)
    }

    pub fn meta(&self) -> &AcquisitionMeta {
        &self.meta
    }

    pub fn n_traces(&self) -> usize {
        self.n_traces
    }

    pub fn samples_per_trace(&self) -> usize {
        self.meta.samples_per_trace()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.samples_per_trace();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.samples_per_trace())
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Traces `indices[0], indices[1], ...` as a new batch.
    pub fn select(&self, indices: &[usize]) -> Result<TraceBatch> {
        let mut data = Vec::with_capacity(indices.len() * self.samples_per_trace());
        for &i in indices {
            if i >= self.n_traces {
                return Err(invalid(format!("trace index {i} out of range {}", self.n_traces)));
            }
            data.extend_from_slice(self.row(i));
        }
        TraceBatch::new(data, self.meta)
    }

    /// Contiguous sub-range of traces.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<TraceBatch> {
        if range.start >= range.end || range.end > self.n_traces {
            return Err(invalid(format!("bad trace range {range:?} of {}", self.n_traces)));
        }
        let w = self.samples_per_trace();
        TraceBatch::new(self.data[range.start * w..range.end * w].to_vec(), self.meta)
    }
}

/// A batch with one photon-number label per trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    batch: TraceBatch,
    labels: Vec<Label>,
}

impl LabeledBatch {
    pub fn new(batch: TraceBatch, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != batch.n_traces() {
            return Err(Error::LengthMismatch { expected: batch.n_traces(), actual: labels.len() });
        }
        Ok(Self { batch, labels })
    }

    pub fn batch(&self) -> &TraceBatch {
        &self.batch
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn into_parts(self) -> (TraceBatch, Vec<Label>) {
        (self.batch, self.labels)
    }
}

/// Cuts a digitised stream into consecutive, non-overlapping traces starting
/// at `trigger_offset`. Tail samples that do not fill a whole trace are dropped.
pub fn segment_stream(
    samples: &[f32],
    meta: &AcquisitionMeta,
    trigger_offset: usize,
) -> Result<TraceBatch> {
    let width = meta.samples_per_trace();
    let available = samples.len().saturating_sub(trigger_offset);
    let n = available / width;
    if n == 0 {
        return Err(Error::EmptyStream { available, needed: width });
    }
    let start = trigger_offset;
    TraceBatch::new(samples[start..start + n * width].to_vec(), *meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(l: usize) -> AcquisitionMeta {
        AcquisitionMeta::new(l as f64 * 1e5, 1e5, 1.0).unwrap()
    }

    #[test]
    fn samples_per_trace_is_floor_of_ratio() {
        let m = AcquisitionMeta::new(20e6, 800e3, 1.0).unwrap();
        assert_eq!(m.samples_per_trace(), 25);
        let m = AcquisitionMeta::new(20e6, 300e3, 1.0).unwrap();
        assert_eq!(m.samples_per_trace(), 66);
        assert!(AcquisitionMeta::new(20e6, 15e6, 1.0).is_err());
        assert!(AcquisitionMeta::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn segment_exact_multiple() {
        let l = 8;
        let s: Vec<f32> = (0..3 * l).map(|i| i as f32 * 1e-3).collect();
        let b = segment_stream(&s, &meta(l), 0).unwrap();
        assert_eq!(b.n_traces(), 3);
        assert_eq!(b.row(1), &s[l..2 * l]);
    }

    #[test]
    fn segment_drops_remainder() {
        let l = 8;
        let s = vec![0.0f32; 3 * l + 7];
        let b = segment_stream(&s, &meta(l), 0).unwrap();
        assert_eq!(b.n_traces(), 3);
    }

    #[test]
    fn segment_respects_offset() {
        let l = 4;
        let s: Vec<f32> = (0..13).map(|i| i as f32 * 1e-2).collect();
        let b = segment_stream(&s, &meta(l), 2).unwrap();
        assert_eq!(b.n_traces(), 2);
        assert_eq!(b.row(0), &s[2..6]);
    }

    #[test]
    fn segment_short_stream_is_empty() {
        let l = 8;
        let s = vec![0.0f32; l - 1];
        assert!(matches!(segment_stream(&s, &meta(l), 0), Err(Error::EmptyStream { .. })));
        let s = vec![0.0f32; l + 2];
        assert!(matches!(segment_stream(&s, &meta(l), 3), Err(Error::EmptyStream { .. })));
    }

    #[test]
    fn batch_rejects_out_of_range_samples() {
        assert!(TraceBatch::new(vec![0.0, 1.5], meta(2)).is_err());
        assert!(TraceBatch::new(vec![0.0, f32::NAN], meta(2)).is_err());
        assert!(TraceBatch::new(vec![0.0; 3], meta(2)).is_err());
    }

    #[test]
    fn label_encoding() {
        assert_eq!(Label::from_raw(-1).unwrap(), Label::UNCLASSIFIED);
        assert_eq!(Label::from_raw(63).unwrap().count(), Some(63));
        assert!(Label::from_raw(64).is_err());
        assert!(Label::from_raw(-2).is_err());
        assert_eq!(Label::UNCLASSIFIED.to_string(), "U");
    }
}
