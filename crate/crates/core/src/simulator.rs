//! Synthetic TES traces with known photon numbers.
//!
//! Each pulse deposits a normalised double-exponential template scaled by a
//! saturating amplitude `A(n)`. A trace window starts at its own pulse and
//! also carries the tails of the `history_depth` preceding pulses, so raising
//! the repetition rate produces overlapping traces. White Gaussian noise is
//! added per sample and the result is clipped to the ADC range.

use rand::Rng as _;
use rand_distr::{Binomial, Distribution, Geometric, Poisson, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::par::{self, Exec};
use crate::rng::{rng_for_range, sub_seed};
use crate::trace::{AcquisitionMeta, Label, LabeledBatch, TraceBatch, MAX_PHOTONS};

pub const DEFAULT_SAMPLE_RATE: f64 = 20e6;
pub const DEFAULT_ADC_RANGE: f64 = 1.0;
pub const DEFAULT_HISTORY_DEPTH: usize = 4;

const CHUNK: usize = 1024;

/// Phenomenological detector response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseShape {
    /// Seconds.
    pub tau_rise: f64,
    /// Seconds.
    pub tau_fall: f64,
    /// Volts per photon in the linear regime.
    pub unit_amplitude: f64,
    /// Saturation constant in photons; infinite disables saturation.
    /// Serialised as `null` when infinite.
    #[serde(serialize_with = "ser_sat", deserialize_with = "de_sat")]
    pub sat_scale: f64,
    /// Standard deviation of the additive white noise, volts.
    pub noise_sigma: f64,
    pub baseline: f64,
}

fn ser_sat<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_sat<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl Default for PulseShape {
    fn default() -> Self {
        Self {
            tau_rise: 0.3e-6,
            tau_fall: 2.0e-6,
            unit_amplitude: 0.12,
            sat_scale: 12.0,
            noise_sigma: 6e-3,
            baseline: 0.0,
        }
    }
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_rise > 0.0 && self.tau_rise < self.tau_fall && self.tau_fall.is_finite()) {
            return Err(invalid("pulse shape needs 0 < tau_rise < tau_fall"));
        }
        if !(self.unit_amplitude > 0.0 && self.unit_amplitude.is_finite()) {
            return Err(invalid("unit_amplitude must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma must be non-negative"));
        }
        if !(self.sat_scale > 0.0) {
            return Err(invalid("sat_scale must be positive or infinite"));
        }
        if !self.baseline.is_finite() {
            return Err(invalid("baseline must be finite"));
        }
        Ok(())
    }

    /// Time of the template maximum, `tr*tf/(tf-tr) * ln(tf/tr)`.
    pub fn peak_time(&self) -> f64 {
        let (tr, tf) = (self.tau_rise, self.tau_fall);
        tr * tf / (tf - tr) * (tf / tr).ln()
    }

    fn raw(&self, t: f64) -> f64 {
        (-t / self.tau_fall).exp() - (-t / self.tau_rise).exp()
    }

    /// Unit-peak template at time `t` after the pulse; zero before it.
    pub fn template(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.raw(t) / self.raw(self.peak_time())
    }

    /// Pulse height for `n` photons: `u * s * (1 - exp(-n/s))`, or `u * n` without saturation.
    pub fn amplitude(&self, n: usize) -> f64 {
        let n = n as f64;
        if self.sat_scale.is_infinite() {
            self.unit_amplitude * n
        } else {
            -self.unit_amplitude * self.sat_scale * (-n / self.sat_scale).exp_m1()
        }
    }
}

/// Photon statistics of the light source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceModel {
    Coherent { mu: f64 },
    Tmsv { lambda: f64, eta_signal: f64, eta_idler: f64 },
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceModel::Coherent { mu } => {
                if !(mu >= 0.0 && mu.is_finite()) {
                    return Err(invalid(format!("mu must be non-negative, got {mu}")));
                }
            }
            SourceModel::Tmsv { lambda, eta_signal, eta_idler } => {
                if !(lambda.abs() < 1.0) {
                    return Err(invalid(format!("|lambda| must be below 1, got {lambda}")));
                }
                for eta in [eta_signal, eta_idler] {
                    if !(0.0..=1.0).contains(&eta) {
                        return Err(invalid(format!("transmission must be in [0,1], got {eta}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Squeezing parameter giving a thermal marginal with the given mean pair number.
    pub fn lambda_for_mean(mean: f64) -> f64 {
        (mean / (1.0 + mean)).sqrt()
    }
}

/// Ground-truth photon numbers drawn from a source.
#[derive(Debug, Clone, PartialEq)]
pub enum PhotonSamples {
    Single(Vec<Label>),
    Pair { signal: Vec<Label>, idler: Vec<Label> },
}

fn checked_label(n: u64) -> Result<Label> {
    if n as usize >= MAX_PHOTONS {
        return Err(invalid(format!("drew {n} photons, above the label ceiling {MAX_PHOTONS}")));
    }
    Ok(Label::photons(n as usize))
}

/// Draws photon numbers for `n_pulses` pulses. Deterministic given `seed`.
pub fn sample_photon_numbers(
    source: &SourceModel,
    n_pulses: usize,
    seed: u64,
    exec: Exec,
) -> Result<PhotonSamples> {
    source.validate()?;
    if n_pulses == 0 {
        return Err(invalid("n_pulses must be at least 1"));
    }
    let n_chunks = n_pulses.div_ceil(CHUNK);
    let chunk_range = |c: usize| c * CHUNK..((c + 1) * CHUNK).min(n_pulses);
    match *source {
        SourceModel::Coherent { mu } => {
            let chunks = par::map_indexed(exec, n_chunks, |c| -> Result<Vec<Label>> {
                let range = chunk_range(c);
                if mu == 0.0 {
                    return Ok(vec![Label::photons(0); range.len()]);
                }
                let mut rng = rng_for_range(seed, range.start as u64);
                let dist = Poisson::new(mu).map_err(|e| invalid(e.to_string()))?;
                range.map(|_| checked_label(dist.sample(&mut rng) as u64)).collect()
            });
            let mut out = Vec::with_capacity(n_pulses);
            for c in chunks {
                out.extend(c?);
            }
            Ok(PhotonSamples::Single(out))
        }
        SourceModel::Tmsv { lambda, eta_signal, eta_idler } => {
            let q = lambda * lambda;
            let chunks = par::map_indexed(exec, n_chunks, |c| -> Result<Vec<(Label, Label)>> {
                let range = chunk_range(c);
                let mut rng = rng_for_range(seed, range.start as u64);
                let pairs = Geometric::new(1.0 - q).map_err(|e| invalid(e.to_string()))?;
                range
                    .map(|_| {
                        let n = pairs.sample(&mut rng);
                        let s = Binomial::new(n, eta_signal).map_err(|e| invalid(e.to_string()))?;
                        let i = Binomial::new(n, eta_idler).map_err(|e| invalid(e.to_string()))?;
                        let (ns, ni) = (s.sample(&mut rng), i.sample(&mut rng));
                        Ok((checked_label(ns)?, checked_label(ni)?))
                    })
                    .collect()
            });
            let mut signal = Vec::with_capacity(n_pulses);
            let mut idler = Vec::with_capacity(n_pulses);
            for c in chunks {
                for (s, i) in c? {
                    signal.push(s);
                    idler.push(i);
                }
            }
            Ok(PhotonSamples::Pair { signal, idler })
        }
    }
}

/// Renders traces for a pulse sequence. Output labels equal the input labels.
pub fn synthesize_batch(
    labels: &[Label],
    shape: &PulseShape,
    meta: &AcquisitionMeta,
    history_depth: usize,
    seed: u64,
    exec: Exec,
) -> Result<LabeledBatch> {
    shape.validate()?;
    if labels.is_empty() {
        return Err(invalid("labels must be non-empty"));
    }
    let photons: Vec<usize> = labels
        .iter()
        .map(|l| l.count().ok_or_else(|| invalid("cannot synthesise an UNCLASSIFIED pulse")))
        .collect::<Result<_>>()?;
    let width = meta.samples_per_trace();
    let dt = 1.0 / meta.sample_rate();
    let period = meta.period();
    // templates[j][s]: contribution of the pulse j periods back at sample s
    let templates: Vec<Vec<f64>> = (0..=history_depth)
        .map(|j| (0..width).map(|s| shape.template(s as f64 * dt + j as f64 * period)).collect())
        .collect();
    let max_n = photons.iter().copied().max().unwrap_or(0);
    let amps: Vec<f64> = (0..=max_n).map(|n| shape.amplitude(n)).collect();
    let clip = meta.adc_range();

    let mut data = vec![0f32; labels.len() * width];
    par::for_each_chunk_mut(exec, &mut data, CHUNK * width, |c, out| {
        let first = c * CHUNK;
        let mut rng = rng_for_range(seed, first as u64);
        let mut acc = vec![0f64; width];
        for (r, row) in out.chunks_exact_mut(width).enumerate() {
            let k = first + r;
            acc.fill(shape.baseline);
            for (j, tmpl) in templates.iter().enumerate().take(k + 1) {
                let a = amps[photons[k - j]];
                if a != 0.0 {
                    for (v, t) in acc.iter_mut().zip(tmpl) {
                        *v += a * t;
                    }
                }
            }
            for (o, v) in row.iter_mut().zip(&acc) {
                let noise = if shape.noise_sigma > 0.0 {
                    shape.noise_sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                *o = (v + noise).clamp(-clip, clip) as f32;
            }
        }
    });
    LabeledBatch::new(TraceBatch::new(data, *meta)?, labels.to_vec())
}

/// Full description of one simulated acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub source: SourceModel,
    pub rep_rate_hz: f64,
    pub n_pulses: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pulse_shape: PulseShape,
    #[serde(default = "default_history_depth")]
    pub history_depth: usize,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_adc_range")]
    pub adc_range_v: f64,
}

fn default_history_depth() -> usize {
    DEFAULT_HISTORY_DEPTH
}

fn default_sample_rate() -> f64 {
    DEFAULT_SAMPLE_RATE
}

fn default_adc_range() -> f64 {
    DEFAULT_ADC_RANGE
}

impl SimulationConfig {
    pub fn new(source: SourceModel, rep_rate_hz: f64, n_pulses: usize, seed: u64) -> Self {
        Self {
            source,
            rep_rate_hz,
            n_pulses,
            seed,
            pulse_shape: PulseShape::default(),
            history_depth: DEFAULT_HISTORY_DEPTH,
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            adc_range_v: DEFAULT_ADC_RANGE,
        }
    }

    pub fn meta(&self) -> Result<AcquisitionMeta> {
        AcquisitionMeta::new(self.sample_rate_hz, self.rep_rate_hz, self.adc_range_v)
    }
}

/// Simulated bundles: one for a coherent source, signal and idler for TMSV.
#[derive(Debug, Clone, PartialEq)]
pub enum Simulated {
    Single(LabeledBatch),
    Pair { signal: LabeledBatch, idler: LabeledBatch },
}

const PHOTON_STREAM: u64 = 0x5048_4f54;
const SIGNAL_STREAM: u64 = 0x5349_474e;
const IDLER_STREAM: u64 = 0x4944_4c52;

pub fn simulate(config: &SimulationConfig, exec: Exec) -> Result<Simulated> {
    let meta = config.meta()?;
    let photons = sample_photon_numbers(
        &config.source,
        config.n_pulses,
        sub_seed(config.seed, PHOTON_STREAM),
        exec,
    )?;
    let render = |labels: &[Label], stream: u64| {
        synthesize_batch(
            labels,
            &config.pulse_shape,
            &meta,
            config.history_depth,
            sub_seed(config.seed, stream),
            exec,
        )
    };
    Ok(match photons {
        PhotonSamples::Single(labels) => Simulated::Single(render(&labels, SIGNAL_STREAM)?),
        PhotonSamples::Pair { signal, idler } => Simulated::Pair {
            signal: render(&signal, SIGNAL_STREAM)?,
            idler: render(&idler, IDLER_STREAM)?,
        },
    })
}
