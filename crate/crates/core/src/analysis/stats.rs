//! Analytic photon-number statistics and heralding.

use serde::{Deserialize, Serialize};

use crate::distribution::{distribution_from_labels, max_label, PhotonDistribution};
use crate::error::{invalid, Error, Result};
use crate::trace::Label;

/// Model probabilities for `0..=truncation`; the mass beyond is kept in
/// `tail_mass` rather than folded into the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedDistribution {
    pub probs: Vec<f64>,
    pub tail_mass: f64,
}

impl TruncatedDistribution {
    pub fn truncation(&self) -> usize {
        self.probs.len() - 1
    }

    /// Renormalised over the kept bins.
    pub fn normalized(&self) -> Result<PhotonDistribution> {
        PhotonDistribution::from_weights(&self.probs)
    }
}

/// Poisson probabilities `e^-mu mu^n / n!` for `n <= m`.
pub fn poisson_dist(mu: f64, m: usize) -> Result<TruncatedDistribution> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(invalid(format!("mean photon number must be finite and >= 0, got {mu}")));
    }
    let mut probs = Vec::with_capacity(m + 1);
    let mut term = (-mu).exp();
    probs.push(term);
    for n in 1..=m {
        term *= mu / n as f64;
        probs.push(term);
    }
    // sum the tail directly instead of 1 - sum to keep tiny tails accurate
    let mut tail = 0.0;
    let mut n = m + 1;
    loop {
        term *= mu / n as f64;
        tail += term;
        if term == 0.0 || (n as f64 > mu && term <= tail * 1e-17) {
            break;
        }
        n += 1;
    }
    Ok(TruncatedDistribution { probs, tail_mass: tail })
}

/// Rows of Pascal's triangle up to `n_max`.
fn binomial_table(n_max: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut row = vec![1.0; n + 1];
        for k in 1..n {
            row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
        }
        rows.push(row);
    }
    rows
}

/// Joint signal/idler photon-number distribution, `probs[a][b]` row-major
/// with `a` the signal count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    probs: Vec<f64>,
    truncation: usize,
    /// Mass outside the grid before renormalisation.
    discarded_mass: f64,
}

impl JointDistribution {
    pub fn from_matrix(probs: Vec<f64>, truncation: usize) -> Result<Self> {
        let side = truncation + 1;
        if probs.len() != side * side {
            return Err(Error::LengthMismatch { expected: side * side, actual: probs.len() });
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("joint probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("joint probabilities sum to {total}")));
        }
        Ok(Self { probs, truncation, discarded_mass: 0.0 })
    }

    /// Empirical joint distribution of paired labels, dropping pairs with
    /// an unclassified member.
    pub fn from_labels(signal: &[Label], idler: &[Label], truncation: usize) -> Result<Self> {
        if signal.len() != idler.len() {
            return Err(Error::LengthMismatch { expected: signal.len(), actual: idler.len() });
        }
        let side = truncation + 1;
        let mut counts = vec![0u64; side * side];
        let mut kept = 0u64;
        for (s, i) in signal.iter().zip(idler) {
            if let (Some(a), Some(b)) = (s.count(), i.count()) {
                if a > truncation || b > truncation {
                    return Err(Error::TruncationOverflow { label: a.max(b), truncation });
                }
                counts[a * side + b] += 1;
                kept += 1;
            }
        }
        if kept == 0 {
            return Err(Error::AllUnclassified);
        }
        Self::from_matrix(counts.iter().map(|&c| c as f64 / kept as f64).collect(), truncation)
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn discarded_mass(&self) -> f64 {
        self.discarded_mass
    }

    pub fn get(&self, signal: usize, idler: usize) -> f64 {
        self.probs[signal * (self.truncation + 1) + idler]
    }

    /// Row-major flattening, for fidelities and distances.
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn signal_marginal(&self) -> Vec<f64> {
        let side = self.truncation + 1;
        self.probs.chunks_exact(side).map(|r| r.iter().sum()).collect()
    }

    pub fn idler_marginal(&self) -> Vec<f64> {
        let side = self.truncation + 1;
        (0..side).map(|b| (0..side).map(|a| self.probs[a * side + b]).sum()).collect()
    }
}

/// Two-mode squeezed vacuum with independent binomial loss per mode.
///
/// `p(a,b) = sum_n (1-l^2) l^(2n) Bin(a|n,eta_s) Bin(b|n,eta_i)` summed up to
/// `n = m + 20` and renormalised over the `(m+1)^2` grid.
pub fn tmsv_joint_dist(lambda: f64, eta_signal: f64, eta_idler: f64, m: usize) -> Result<JointDistribution> {
    if !(lambda.abs() < 1.0) {
        return Err(invalid(format!("|lambda| must be < 1, got {lambda}")));
    }
    for eta in [eta_signal, eta_idler] {
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid(format!("efficiency must lie in [0, 1], got {eta}")));
        }
    }
    let n_max = m + 20;
    let binom = binomial_table(n_max);
    let l2 = lambda * lambda;
    let side = m + 1;
    let mut probs = vec![0.0; side * side];
    let pow = |x: f64, k: usize| x.powi(k as i32);
    for n in 0..=n_max {
        let pn = (1.0 - l2) * pow(l2, n);
        if pn == 0.0 {
            continue;
        }
        for a in 0..=n.min(m) {
            let pa = binom[n][a] * pow(eta_signal, a) * pow(1.0 - eta_signal, n - a);
            if pa == 0.0 {
                continue;
            }
            for b in 0..=n.min(m) {
                let pb = binom[n][b] * pow(eta_idler, b) * pow(1.0 - eta_idler, n - b);
                probs[a * side + b] += pn * pa * pb;
            }
        }
    }
    let kept: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= kept);
    Ok(JointDistribution { probs, truncation: m, discarded_mass: (1.0 - kept).max(0.0) })
}

/// Signal distribution conditioned on the idler reporting `n_idler`.
pub fn herald_joint(joint: &JointDistribution, n_idler: usize) -> Result<PhotonDistribution> {
    if n_idler > joint.truncation {
        return Err(Error::EmptyHerald(n_idler));
    }
    let col: Vec<f64> = (0..=joint.truncation).map(|a| joint.get(a, n_idler)).collect();
    if col.iter().sum::<f64>() <= 0.0 {
        return Err(Error::EmptyHerald(n_idler));
    }
    PhotonDistribution::from_weights(&col)
}

/// Heralded signal distribution from paired labels. Pairs with an
/// unclassified member are discarded first. `truncation` defaults to the
/// largest heralded signal label.
pub fn herald_labels(
    signal: &[Label],
    idler: &[Label],
    n_idler: usize,
    truncation: Option<usize>,
) -> Result<PhotonDistribution> {
    if signal.len() != idler.len() {
        return Err(Error::LengthMismatch { expected: signal.len(), actual: idler.len() });
    }
    let heralded: Vec<Label> = signal
        .iter()
        .zip(idler)
        .filter(|(s, i)| !s.is_unclassified() && i.count() == Some(n_idler))
        .map(|(s, _)| *s)
        .collect();
    let Some(top) = max_label(&heralded) else {
        return Err(Error::EmptyHerald(n_idler));
    };
    distribution_from_labels(&heralded, truncation.unwrap_or(top), true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_vacuum() {
        let p = poisson_dist(0.0, 4).unwrap();
        assert_eq!(p.probs, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.tail_mass, 0.0);
    }

    #[test]
    fn poisson_values_and_tail() {
        let p = poisson_dist(1.0, 3).unwrap();
        assert!((p.probs[0] - (-1f64).exp()).abs() < 1e-12);
        assert!((p.probs[3] - (-1f64).exp() / 6.0).abs() < 1e-15);
        let total: f64 = p.probs.iter().sum::<f64>() + p.tail_mass;
        assert!((total - 1.0).abs() < 1e-14);

        let p = poisson_dist(5.29, 16).unwrap();
        assert!(p.tail_mass < 1e-4 && p.tail_mass > 0.0);
        // independent tail: 1 - regularised sum via logs
        let head: f64 = (0..=16)
            .map(|n| (-5.29 + n as f64 * 5.29f64.ln() - (1..=n).map(|k| (k as f64).ln()).sum::<f64>()).exp())
            .sum();
        assert!((p.tail_mass - (1.0 - head)).abs() < 1e-12);
    }

    #[test]
    fn poisson_rejects_negative_mean() {
        assert!(poisson_dist(-0.1, 3).is_err());
    }

    #[test]
    fn tmsv_vacuum() {
        let j = tmsv_joint_dist(0.0, 0.7, 0.3, 3).unwrap();
        assert_eq!(j.get(0, 0), 1.0);
        assert_eq!(j.as_slice().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn tmsv_lossless_is_diagonal_geometric() {
        let l = 0.5f64;
        let j = tmsv_joint_dist(l, 1.0, 1.0, 6).unwrap();
        for a in 0..=6 {
            for b in 0..=6 {
                if a != b {
                    assert_eq!(j.get(a, b), 0.0);
                }
            }
        }
        for n in 0..6 {
            assert!((j.get(n + 1, n + 1) / j.get(n, n) - l * l).abs() < 1e-12);
        }
    }

    #[test]
    fn tmsv_sums_to_one() {
        let j = tmsv_joint_dist(0.8, 0.6, 0.9, 10).unwrap();
        assert!((j.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(j.discarded_mass() > 0.0);
    }

    #[test]
    fn herald_lossless_is_fock() {
        let j = tmsv_joint_dist(0.6, 1.0, 1.0, 8).unwrap();
        let d = herald_joint(&j, 2).unwrap();
        assert_eq!(d.probs()[2], 1.0);
    }

    #[test]
    fn herald_on_vacuum_is_empty() {
        let j = tmsv_joint_dist(0.0, 1.0, 1.0, 4).unwrap();
        assert!(matches!(herald_joint(&j, 1), Err(Error::EmptyHerald(1))));
    }

    #[test]
    fn herald_with_lossy_signal_is_binomial() {
        let j = tmsv_joint_dist(0.6, 0.75, 1.0, 12).unwrap();
        let d = herald_joint(&j, 3).unwrap();
        let want = [0.25f64.powi(3), 3.0 * 0.75 * 0.0625, 3.0 * 0.5625 * 0.25, 0.421875];
        for (a, w) in want.iter().enumerate() {
            assert!((d.probs()[a] - w).abs() < 1e-12);
        }
        assert!(d.probs()[4..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn heralds_recompose_the_marginal() {
        let j = tmsv_joint_dist(0.7, 0.8, 0.6, 14).unwrap();
        let idler = j.idler_marginal();
        let mut sum = vec![0.0; 15];
        for (n, pn) in idler.iter().enumerate() {
            if *pn > 0.0 {
                let h = herald_joint(&j, n).unwrap();
                sum.iter_mut().zip(h.probs()).for_each(|(s, p)| *s += pn * p);
            }
        }
        for (s, m) in sum.iter().zip(j.signal_marginal()) {
            assert!((s - m).abs() < 1e-9);
        }
    }

    #[test]
    fn herald_from_labels_drops_unclassified() {
        let l = |v: &[i64]| v.iter().map(|&x| Label::from_raw(x).unwrap()).collect::<Vec<_>>();
        let s = l(&[1, -1, 2, 1, 0]);
        let i = l(&[2, 2, 2, -1, 1]);
        let d = herald_labels(&s, &i, 2, None).unwrap();
        assert_eq!(d.probs(), &[0.0, 0.5, 0.5]);
        assert!(matches!(herald_labels(&s, &i, 5, None), Err(Error::EmptyHerald(5))));
    }

    #[test]
    fn joint_from_labels() {
        let l = |v: &[i64]| v.iter().map(|&x| Label::from_raw(x).unwrap()).collect::<Vec<_>>();
        let j = JointDistribution::from_labels(&l(&[0, 1, 1, -1]), &l(&[0, 1, 0, 0]), 1).unwrap();
        assert_eq!(j.as_slice(), &[1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0]);
    }
}
