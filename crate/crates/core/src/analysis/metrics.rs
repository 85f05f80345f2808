//! Distances and fidelities between distributions and POVMs.

use serde::{Deserialize, Serialize};

use crate::analysis::tomography::ConfusionMatrix;
use crate::error::{invalid, Error, Result};
use crate::trace::Label;

fn padded<'a>(p: &'a [f64], q: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    (0..p.len().max(q.len())).map(move |i| (at(p, i), at(q, i)))
}

/// Total variation distance `1/2 sum |p_i - q_i|`; the shorter input is
/// zero-padded.
pub fn tvd(p: &[f64], q: &[f64]) -> f64 {
    0.5 * padded(p, q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `(sum sqrt(p_i q_i))^2`, clamped to `[0, 1]` against rounding.
pub fn distribution_fidelity(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = padded(p, q).map(|(a, b)| (a * b).sqrt()).sum();
    (s * s).clamp(0.0, 1.0)
}

/// How [`povm_fidelity`] treats a row with zero mass in both matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyRowPolicy {
    /// The row counts as a perfect match.
    #[default]
    BothZeroIsOne,
    /// The row is left out of the average.
    Exclude,
}

/// Average row fidelity over reported outcomes `0..=n_max` and actual
/// photon numbers `0..=m_max`.
///
/// A row with mass in only one matrix scores 0.
pub fn povm_fidelity(
    theta: &ConfusionMatrix,
    theta_ref: &ConfusionMatrix,
    n_max: usize,
    m_max: usize,
    policy: EmptyRowPolicy,
) -> Result<f64> {
    for t in [theta, theta_ref] {
        if t.n_reported() < n_max || t.m_actual() < m_max {
            return Err(invalid(format!(
                "matrix covers n <= {}, m <= {}; fidelity asks for {n_max}, {m_max}",
                t.n_reported(),
                t.m_actual()
            )));
        }
    }
    let mut total = 0.0;
    let mut rows = 0usize;
    for n in 0..=n_max {
        let (mut overlap, mut sa, mut sb) = (0.0, 0.0, 0.0);
        for m in 0..=m_max {
            let (a, b) = (theta.get(n, m), theta_ref.get(n, m));
            overlap += (a * b).sqrt();
            sa += a;
            sb += b;
        }
        let term = match (sa > 0.0, sb > 0.0) {
            (true, true) => (overlap * overlap / (sa * sb)).min(1.0),
            (false, false) if policy == EmptyRowPolicy::Exclude => continue,
            (false, false) => 1.0,
            _ => 0.0,
        };
        total += term;
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Degenerate("every row is empty in both matrices".into()));
    }
    Ok(total / rows as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub photons: usize,
    pub support: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Per-photon-number recall of `predicted` against `truth`.
/// Unclassified predictions count as wrong.
pub fn class_accuracy(predicted: &[Label], truth: &[Label]) -> Result<Vec<ClassAccuracy>> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), actual: predicted.len() });
    }
    let mut acc: Vec<ClassAccuracy> = Vec::new();
    for (p, t) in predicted.iter().zip(truth) {
        let Some(n) = t.count() else { continue };
        if acc.len() <= n {
            acc.extend((acc.len()..=n).map(|photons| ClassAccuracy { photons, support: 0, correct: 0, accuracy: 0.0 }));
        }
        acc[n].support += 1;
        acc[n].correct += usize::from(p == t);
    }
    for a in &mut acc {
        a.accuracy = if a.support > 0 { a.correct as f64 / a.support as f64 } else { f64::NAN };
    }
    Ok(acc)
}
