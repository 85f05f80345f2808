//! Principal component analysis of mean-subtracted trace matrices.
//!
//! Each trace is written as `v_i = sum_j F_ij q_j + mean`, where the `q_j` are
//! right singular vectors of the mean-subtracted matrix and `F` holds the
//! factor scores.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::trace::{AcquisitionMeta, TraceBatch};

/// Mean, orthonormal axes and singular values of a point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalAxes {
    pub mean: Vec<f64>,
    /// `components[j]` is the j-th unit axis, ordered by decreasing singular value.
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

/// Full set of `d` principal axes of the `n x d` row-major matrix `data`.
///
/// The thin SVD is taken on the centred matrix itself, after a QR
/// reduction when `n > d` (or zero-padding when `n < d`), so the right
/// singular vectors always form a complete `d x d` basis. Each axis is
/// oriented so that its largest-magnitude element is positive.
pub fn principal_axes(data: &[f64], n: usize, d: usize) -> PrincipalAxes {
    assert_eq!(data.len(), n * d);
    assert!(n >= 1 && d >= 1);
    let mut mean = vec![0f64; d];
    for row in data.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centred = DMatrix::from_fn(n.max(d), d, |i, j| if i < n { data[i * d + j] - mean[j] } else { 0.0 });
    let square = if n > d { centred.qr().unpack_r() } else { centred };
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let components = order
        .iter()
        .map(|&k| {
            let mut q: Vec<f64> = v_t.row(k).iter().copied().collect();
            let lead = q
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (i, &x)| if x.abs() > acc.1.abs() { (i, x) } else { acc });
            if lead.1 < 0.0 {
                q.iter_mut().for_each(|x| *x = -*x);
            }
            q
        })
        .collect();
    let singular_values = order.iter().map(|&k| sv[k].max(0.0)).collect();
    PrincipalAxes { mean, components, singular_values }
}

/// PCA fitted on a trace batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub n_fitted: usize,
    pub meta: AcquisitionMeta,
}

/// Row-major `n_traces x n_components` factor-score matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    data: Vec<f64>,
    n_components: usize,
}

impl FactorScores {
    pub fn new(data: Vec<f64>, n_components: usize) -> Result<Self> {
        if n_components == 0 || data.len() % n_components != 0 {
            return Err(Error::LengthMismatch {
                expected: n_components.max(1) * (data.len() / n_components.max(1)),
                actual: data.len(),
            });
        }
        Ok(Self { data, n_components })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_components
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_components..(i + 1) * self.n_components]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n_components)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

impl PcaModel {
    pub fn fit(batch: &TraceBatch) -> Result<PcaModel> {
        if batch.n_traces() < 2 {
            return Err(Error::TooFewPoints { available: batch.n_traces(), needed: 2 });
        }
        let data: Vec<f64> = batch.as_slice().iter().map(|&v| v as f64).collect();
        let axes = principal_axes(&data, batch.n_traces(), batch.samples_per_trace());
        if axes.singular_values.iter().all(|&s| s == 0.0) {
            log::debug!("PCA fitted on identical traces; every factor score is zero");
        }
        Ok(PcaModel {
            mean: axes.mean,
            components: axes.components,
            singular_values: axes.singular_values,
            n_fitted: batch.n_traces(),
            meta: *batch.meta(),
        })
    }

    /// Signal dimension `D`.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Scores of one trace on the first `n_components` axes.
    pub fn project_into(&self, trace: &[f32], out: &mut [f64]) {
        for (o, q) in out.iter_mut().zip(&self.components) {
            *o = trace
                .iter()
                .zip(&self.mean)
                .zip(q)
                .map(|((&v, m), q)| (v as f64 - m) * q)
                .sum();
        }
    }

    /// `F = (V - 1 mean^T) Q[:, ..n_components]`.
    pub fn transform(&self, batch: &TraceBatch, n_components: usize, exec: Exec) -> Result<FactorScores> {
        if batch.samples_per_trace() != self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), actual: batch.samples_per_trace() });
        }
        if n_components == 0 || n_components > self.dim() {
            return Err(Error::InvalidArgument(format!(
                "n_components must be in 1..={}, got {n_components}",
                self.dim()
            )));
        }
        let rows = par::map_indexed(exec, batch.n_traces(), |i| {
            let mut out = vec![0f64; n_components];
            self.project_into(batch.row(i), &mut out);
            out
        });
        FactorScores::new(rows.concat(), n_components)
    }

    /// `v_i = sum_j F_ij q_j + mean` in full precision, row-major.
    pub fn reconstruct_f64(&self, scores: &FactorScores) -> Result<Vec<f64>> {
        let n = scores.n_components();
        if n > self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), actual: n });
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(scores.n_rows() * d);
        for row in scores.rows() {
            let start = out.len();
            out.extend_from_slice(&self.mean);
            for (f, q) in row.iter().zip(&self.components) {
                for (o, qv) in out[start..].iter_mut().zip(q) {
                    *o += f * qv;
                }
            }
        }
        Ok(out)
    }

    /// Reconstructed traces at storage precision.
    pub fn reconstruct(&self, scores: &FactorScores) -> Result<TraceBatch> {
        let v = self.reconstruct_f64(scores)?;
        TraceBatch::new(v.into_iter().map(|x| x as f32).collect(), self.meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn meta(d: usize) -> AcquisitionMeta {
        AcquisitionMeta::new(d as f64 * 1e5, 1e5, 1.0).unwrap()
    }

    fn random_batch(n: usize, d: usize, seed: u64) -> TraceBatch {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        TraceBatch::from_rows(&rows, meta(d)).unwrap()
    }

    #[test]
    fn identical_traces_have_zero_variance() {
        let t = [0.1, 0.2, -0.3, 0.05];
        let b = TraceBatch::from_rows(&[t, t, t], meta(4)).unwrap();
        let m = PcaModel::fit(&b).unwrap();
        assert!(m.singular_values.iter().all(|&s| s == 0.0));
        let f = m.transform(&b, 4, Exec::default()).unwrap();
        assert!(f.as_slice().iter().all(|&x| x == 0.0));
        for (a, e) in m.mean.iter().zip(t) {
            assert_eq!(*a, e as f32 as f64);
        }
    }

    #[test]
    fn two_traces_give_rank_one() {
        let a = [0.5f64, 0.25, -0.25, 0.0];
        let b = [0.0f64, 0.25, 0.25, 0.125];
        let batch = TraceBatch::from_rows(&[a, b], meta(4)).unwrap();
        let m = PcaModel::fit(&batch).unwrap();
        assert!(m.singular_values[0] > 0.1);
        assert!(m.singular_values[1..].iter().all(|&s| s < 1e-12));
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let norm = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos: f64 = diff.iter().zip(&m.components[0]).map(|(x, q)| x * q / norm).sum();
        assert!((cos.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_identity() {
        let b = random_batch(100, 50, 1);
        let m = PcaModel::fit(&b).unwrap();
        let total: f64 = b
            .rows()
            .flat_map(|r| r.iter().zip(&m.mean).map(|(&v, mu)| (v as f64 - mu).powi(2)))
            .sum();
        let sv2: f64 = m.singular_values.iter().map(|s| s * s).sum();
        assert!((sv2 - total).abs() <= 1e-9 * total);
    }

    #[test]
    fn components_are_orthonormal_and_sorted() {
        for (n, d) in [(100, 20), (7, 20), (20, 20)] {
            let m = PcaModel::fit(&random_batch(n, d, n as u64)).unwrap();
            assert_eq!(m.components.len(), d);
            for i in 0..d {
                for j in 0..d {
                    let dot: f64 = m.components[i].iter().zip(&m.components[j]).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-8, "({i},{j}) = {dot}");
                }
            }
            assert!(m.singular_values.windows(2).all(|w| w[0] >= w[1]));
            for q in &m.components {
                let lead = q.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
                assert!(lead > 0.0);
            }
        }
    }

    #[test]
    fn full_rank_round_trip() {
        let b = random_batch(60, 30, 3);
        let m = PcaModel::fit(&b).unwrap();
        let f = m.transform(&b, 30, Exec::default()).unwrap();
        let r = m.reconstruct_f64(&f).unwrap();
        for (x, y) in b.as_slice().iter().zip(&r) {
            assert!((*x as f64 - y).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_projects_to_zero_and_zero_scores_give_mean() {
        let b = random_batch(40, 10, 4);
        let m = PcaModel::fit(&b).unwrap();
        let mean_batch = TraceBatch::from_rows(&[m.mean.clone()], meta(10)).unwrap();
        let f = m.transform(&mean_batch, 10, Exec::default()).unwrap();
        assert!(f.as_slice().iter().all(|x| x.abs() < 1e-7));
        let zero = FactorScores::new(vec![0.0; 6], 3).unwrap();
        let r = m.reconstruct_f64(&zero).unwrap();
        assert_eq!(&r[..10], &m.mean[..]);
    }

    #[test]
    fn transform_guards() {
        let b = random_batch(10, 5, 5);
        let m = PcaModel::fit(&b).unwrap();
        assert!(m.transform(&b, 0, Exec::default()).is_err());
        assert!(m.transform(&b, 6, Exec::default()).is_err());
        let other = random_batch(10, 6, 5);
        assert!(matches!(m.transform(&other, 2, Exec::default()), Err(Error::LengthMismatch { .. })));
        assert!(PcaModel::fit(&random_batch(1, 5, 0)).is_err());
    }

    #[test]
    fn more_components_reconstruct_better() {
        let b = random_batch(50, 12, 6);
        let m = PcaModel::fit(&b).unwrap();
        let err = |n| {
            let r = m.reconstruct_f64(&m.transform(&b, n, Exec::default()).unwrap()).unwrap();
            b.as_slice().iter().zip(&r).map(|(x, y)| (*x as f64 - y).powi(2)).sum::<f64>()
        };
        assert!(err(2) <= err(1));
    }
}
