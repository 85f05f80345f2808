//! Photon-number distributions and label counting.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::trace::Label;

const SUM_TOLERANCE: f64 = 1e-9;

/// Probability vector over photon numbers `0..=truncation`.
///
/// When unclassified events are kept as their own outcome, their share is
/// held in `unclassified` and `probs` sums to `1 - unclassified`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    probs: Vec<f64>,
    truncation: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    unclassified: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl PhotonDistribution {
    /// Validates an already-normalised vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_unclassified(probs, 0.0)
    }

    pub fn with_unclassified(probs: Vec<f64>, unclassified: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("distribution needs at least one bin"));
        }
        if probs.iter().chain(std::iter::once(&unclassified)).any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum::<f64>() + unclassified;
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { truncation: probs.len() - 1, probs, unclassified })
    }

    /// Normalises non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights must be non-negative with positive sum"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn unclassified(&self) -> f64 {
        self.unclassified
    }

    pub fn mean(&self) -> f64 {
        let classified: f64 = self.probs.iter().sum();
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum::<f64>() / classified
    }

    /// Probabilities with the unclassified share appended as a final outcome.
    pub fn with_unclassified_outcome(&self) -> Vec<f64> {
        let mut v = self.probs.clone();
        v.push(self.unclassified);
        v
    }
}

/// Empirical distribution of `labels` over `0..=truncation`.
///
/// With `drop_unclassified` the sentinel labels are discarded and the rest
/// renormalised; otherwise their share is kept as the unclassified outcome.
pub fn distribution_from_labels(
    labels: &[Label],
    truncation: usize,
    drop_unclassified: bool,
) -> Result<PhotonDistribution> {
    let mut counts = vec![0u64; truncation + 1];
    let mut unclassified = 0u64;
    for &l in labels {
        match l.count() {
            Some(n) if n <= truncation => counts[n] += 1,
            Some(n) => return Err(Error::TruncationOverflow { label: n, truncation }),
            None => unclassified += 1,
        }
    }
    let classified: u64 = counts.iter().sum();
    if classified == 0 {
        return Err(Error::AllUnclassified);
    }
    let total = if drop_unclassified { classified } else { classified + unclassified } as f64;
    let probs = counts.iter().map(|&c| c as f64 / total).collect();
    let u = if drop_unclassified { 0.0 } else { unclassified as f64 / total };
    PhotonDistribution::with_unclassified(probs, u)
}

/// Largest classified label, if any.
pub fn max_label(labels: &[Label]) -> Option<usize> {
    labels.iter().filter_map(|l| l.count()).max()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(v: &[i64]) -> Vec<Label> {
        v.iter().map(|&x| Label::from_raw(x).unwrap()).collect()
    }

    #[test]
    fn direct_count() {
        let d = distribution_from_labels(&l(&[0, 0, 1, 1]), 2, false).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn sentinel_removed_and_renormalised() {
        let d = distribution_from_labels(&l(&[1, -1, 1, 3]), 4, true).unwrap();
        let want = [0.0, 2.0 / 3.0, 0.0, 1.0 / 3.0, 0.0];
        for (a, b) in d.probs().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(d.unclassified(), 0.0);
    }

    #[test]
    fn sentinel_kept_as_outcome() {
        let d = distribution_from_labels(&l(&[1, -1, 1, 3]), 4, false).unwrap();
        assert_eq!(d.unclassified(), 0.25);
        assert_eq!(d.probs()[1], 0.5);
        assert_eq!(d.with_unclassified_outcome().len(), 6);
    }

    #[test]
    fn overflow_and_all_unclassified() {
        assert!(matches!(
            distribution_from_labels(&l(&[5]), 4, true),
            Err(Error::TruncationOverflow { label: 5, truncation: 4 })
        ));
        assert!(matches!(distribution_from_labels(&l(&[-1, -1]), 4, true), Err(Error::AllUnclassified)));
    }

    #[test]
    fn validation() {
        assert!(PhotonDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(PhotonDistribution::new(vec![1.5, -0.5]).is_err());
        let d = PhotonDistribution::from_weights(&[1.0, 3.0]).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.75]);
        assert!((d.mean() - 0.75).abs() < 1e-15);
    }
}
