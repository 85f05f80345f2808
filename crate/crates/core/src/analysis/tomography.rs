//! Detector tomography: recovering the confusion matrix from coherent probes.
//!
//! Minimises `sum_j |p_j - Theta q_j|^2` over column-stochastic `Theta`, with
//! `q_j` the truncated Poisson statistics of probe `j` and `p_j` its measured
//! distribution. Truncated Poisson vectors are nearly collinear, so the
//! problem is badly conditioned: accelerated projected gradient finds the
//! neighbourhood of the optimum and an exact active-set phase finishes it.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::stats::poisson_dist;
use crate::distribution::PhotonDistribution;
use crate::error::{invalid, Error, Result};
use crate::par::{self, Exec};
use crate::rng::{rng_for_range, Rng};

const COLUMN_TOLERANCE: f64 = 1e-6;

/// `theta[n][m]`: probability of reporting `n` photons when `m` arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    theta: Vec<f64>,
    n_reported: usize,
    m_actual: usize,
}

impl ConfusionMatrix {
    /// Row-major `(n_reported+1) x (m_actual+1)` matrix with stochastic columns.
    pub fn new(theta: Vec<f64>, n_reported: usize, m_actual: usize) -> Result<Self> {
        let expected = (n_reported + 1) * (m_actual + 1);
        if theta.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: theta.len() });
        }
        if theta.iter().any(|t| !(-1e-12..=1.0 + 1e-12).contains(t)) {
            return Err(invalid("confusion matrix entries must lie in [0, 1]"));
        }
        let cm = Self { theta, n_reported, m_actual };
        for m in 0..=m_actual {
            let s: f64 = cm.column(m).iter().sum();
            if (s - 1.0).abs() > COLUMN_TOLERANCE {
                return Err(invalid(format!("column {m} sums to {s}")));
            }
        }
        Ok(cm)
    }

    /// Independent loss with efficiency `eta`: `theta[n][m] = Bin(n | m, eta)`.
    pub fn binomial_loss(eta: f64, truncation: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid(format!("efficiency must lie in [0, 1], got {eta}")));
        }
        let side = truncation + 1;
        let mut theta = vec![0.0; side * side];
        for m in 0..side {
            let mut c = 1.0;
            for n in 0..=m {
                theta[n * side + m] = c * eta.powi(n as i32) * (1.0 - eta).powi((m - n) as i32);
                c = c * (m - n) as f64 / (n + 1) as f64;
            }
        }
        Self::new(theta, truncation, truncation)
    }

    pub fn identity(truncation: usize) -> Self {
        let side = truncation + 1;
        let theta = (0..side * side).map(|i| f64::from(u8::from(i / side == i % side))).collect();
        Self { theta, n_reported: truncation, m_actual: truncation }
    }

    pub fn n_reported(&self) -> usize {
        self.n_reported
    }

    pub fn m_actual(&self) -> usize {
        self.m_actual
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.theta[n * (self.m_actual + 1) + m]
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..=self.n_reported).map(|n| self.get(n, m)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    /// `Theta q` for actual-photon statistics `q` (zero-padded or cut to M+1).
    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        let cols = self.m_actual + 1;
        self.theta
            .chunks_exact(cols)
            .map(|row| row.iter().zip(q).map(|(t, x)| t * x).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &ConfusionMatrix) -> f64 {
        self.theta.iter().zip(&other.theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// One coherent probe: power-meter mean photon number and the measured
/// photon-number distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub mu: f64,
    pub mu_sigma: f64,
    pub measured: PhotonDistribution,
    pub n_pulses: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyOptions {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    /// Bootstrap replicas; 0 disables the error estimate.
    pub bootstrap: usize,
    pub seed: u64,
    /// Keep the objective after every iteration in the result.
    pub record_objective: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for TomographyOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            relative_tolerance: 1e-10,
            bootstrap: 100,
            seed: 0,
            record_objective: false,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub theta: ConfusionMatrix,
    /// Per-element bootstrap standard deviation, row-major like `theta`.
    pub std: Option<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

struct Problem {
    rows: usize,
    cols: usize,
    /// Measured distributions, one `rows`-vector per probe.
    p: Vec<Vec<f64>>,
    /// Model inputs, one `cols`-vector per probe.
    q: Vec<Vec<f64>>,
    step: f64,
}

struct Solution {
    theta: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

impl Problem {
    fn new(p: Vec<Vec<f64>>, q: Vec<Vec<f64>>, rows: usize, cols: usize) -> Self {
        let mut g = DMatrix::<f64>::zeros(cols, cols);
        for qj in &q {
            let v = DMatrix::from_column_slice(cols, 1, qj);
            g += &v * v.transpose();
        }
        let lmax = SymmetricEigen::new(g).eigenvalues.iter().copied().fold(0.0, f64::max);
        // gradient of |Theta Q - P|^2 is Lipschitz with constant 2 lambda_max(QQ^T)
        let step = if lmax > 0.0 { 1.0 / (2.0 * lmax) } else { 0.0 };
        Self { rows, cols, p, q, step }
    }

    /// Objective and, if requested, its gradient.
    fn evaluate(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut f = 0.0;
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut r = vec![0.0; self.rows];
        for (pj, qj) in self.p.iter().zip(&self.q) {
            for (n, rn) in r.iter_mut().enumerate() {
                let row = &theta[n * self.cols..(n + 1) * self.cols];
                *rn = row.iter().zip(qj).map(|(t, x)| t * x).sum::<f64>() - pj[n];
                f += *rn * *rn;
            }
            if let Some(g) = grad.as_deref_mut() {
                for (n, rn) in r.iter().enumerate() {
                    let grow = &mut g[n * self.cols..(n + 1) * self.cols];
                    grow.iter_mut().zip(qj).for_each(|(gv, x)| *gv += 2.0 * rn * x);
                }
            }
        }
        f
    }

    fn project_columns(&self, theta: &mut [f64], column: &mut [f64]) {
        for m in 0..self.cols {
            for n in 0..self.rows {
                column[n] = theta[n * self.cols + m];
            }
            project_to_simplex(column);
            for n in 0..self.rows {
                theta[n * self.cols + m] = column[n];
            }
        }
    }

    /// Monotone accelerated projected gradient with step `1/L`. A step that
    /// would raise the objective is rejected and the momentum restarted, so
    /// the iterate's objective never increases.
    fn descend(&self, x: &mut [f64], opts: &TomographyOptions, trace: &mut Vec<f64>) -> (usize, f64) {
        let len = x.len();
        let mut column = vec![0.0; self.rows];
        self.project_columns(x, &mut column);
        let mut x_prev = x.to_vec();
        let mut y = x.to_vec();
        let mut z = vec![0.0; len];
        let mut grad = vec![0.0; len];
        let mut t = 1.0f64;
        let mut f = self.evaluate(x, None);
        if opts.record_objective {
            trace.push(f);
        }
        let mut iterations = 0;
        let mut done = f == 0.0 || self.step == 0.0;
        while !done && iterations < opts.max_iterations {
            iterations += 1;
            self.evaluate(&y, Some(&mut grad));
            for i in 0..len {
                z[i] = y[i] - self.step * grad[i];
            }
            self.project_columns(&mut z, &mut column);
            let fz = self.evaluate(&z, None);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if fz <= f {
                let plain_step = t == 1.0;
                x_prev.copy_from_slice(x);
                x.copy_from_slice(&z);
                let decrease = f - fz;
                f = fz;
                let beta = (t - 1.0) / t_next;
                for i in 0..len {
                    y[i] = x[i] + beta * (x[i] - x_prev[i]);
                }
                t = t_next;
                // a momentum step can stall without being near a minimum
                done = f == 0.0 || (plain_step && decrease <= opts.relative_tolerance * (f + decrease));
            } else {
                y.copy_from_slice(x);
                t = 1.0;
            }
            if opts.record_objective {
                trace.push(f);
            }
        }
        (iterations, f)
    }

    /// Primal active-set method from a feasible `x`: entries at zero are held
    /// fixed while the rest solve the column-sum-constrained least squares
    /// exactly (minimum-norm step via SVD), with ratio-test steps back onto
    /// the boundary and release of the most negative reduced cost. Each step
    /// moves towards a subspace minimiser, so the objective never increases.
    fn refine(&self, x: &mut [f64], max_steps: usize, record: bool, trace: &mut Vec<f64>) -> (usize, bool) {
        let (rows, cols, probes) = (self.rows, self.cols, self.p.len());
        let mut free: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
        let mut grad = vec![0.0; x.len()];
        // reduced costs below the rounding level of the gradient are noise
        let tol = 16.0 * f64::EPSILON * probes as f64;
        for step in 1..=max_steps {
            // orthonormal basis of zero-sum moves within each column's free rows
            let mut basis: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
            for m in 0..cols {
                let idx: Vec<usize> = (0..rows).filter(|&n| free[n * cols + m]).collect();
                for i in 1..idx.len() {
                    let norm = ((i * (i + 1)) as f64).sqrt();
                    let mut v: Vec<(usize, f64)> = idx[..i].iter().map(|&n| (n, 1.0 / norm)).collect();
                    v.push((idx[i], -(i as f64) / norm));
                    basis.push((m, v));
                }
            }
            let mut d = vec![0.0; x.len()];
            if !basis.is_empty() {
                let mut a = DMatrix::<f64>::zeros(rows * probes, basis.len());
                for (k, (m, v)) in basis.iter().enumerate() {
                    for &(n, z) in v {
                        for j in 0..probes {
                            a[(n * probes + j, k)] += z * self.q[j][*m];
                        }
                    }
                }
                let mut r = DMatrix::<f64>::zeros(rows * probes, 1);
                for j in 0..probes {
                    for n in 0..rows {
                        let row = &x[n * cols..(n + 1) * cols];
                        r[(n * probes + j, 0)] = self.p[j][n] - row.iter().zip(&self.q[j]).map(|(t, q)| t * q).sum::<f64>();
                    }
                }
                let svd = a.svd(true, true);
                let cutoff = 1e-13 * svd.singular_values.max();
                let Ok(w) = svd.solve(&r, cutoff) else {
                    return (step, false);
                };
                for (k, (m, v)) in basis.iter().enumerate() {
                    for &(n, z) in v {
                        d[n * cols + m] += z * w[(k, 0)];
                    }
                }
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..x.len() {
                if free[i] && d[i] < 0.0 {
                    let a = x[i] / -d[i];
                    if a < alpha {
                        alpha = a;
                        blocking = Some(i);
                    }
                }
            }
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(v, dv)| v + alpha * dv).collect();
            if let Some(b) = blocking {
                trial[b] = 0.0;
                free[b] = false;
            }
            for (i, v) in trial.iter_mut().enumerate() {
                if free[i] && *v <= 0.0 {
                    *v = 0.0;
                    free[i] = false;
                }
            }
            x.copy_from_slice(&trial);
            if record {
                trace.push(self.evaluate(x, None));
            }
            if blocking.is_some() {
                continue;
            }
            // optimal on this face: release the most negative reduced cost
            self.evaluate(x, Some(&mut grad));
            let mut best: Option<(usize, f64)> = None;
            for m in 0..cols {
                let fr: Vec<f64> = (0..rows).filter(|&n| free[n * cols + m]).map(|n| grad[n * cols + m]).collect();
                let lambda = if fr.is_empty() { 0.0 } else { fr.iter().sum::<f64>() / fr.len() as f64 };
                for n in 0..rows {
                    let i = n * cols + m;
                    if !free[i] {
                        let rc = grad[i] - lambda;
                        if rc < -tol && best.map_or(true, |(_, b)| rc < b) {
                            best = Some((i, rc));
                        }
                    }
                }
            }
            match best {
                Some((i, _)) => free[i] = true,
                None => return (step, true),
            }
        }
        (max_steps, false)
    }

    fn solve(&self, init: &[f64], opts: &TomographyOptions, warm: bool) -> Solution {
        let mut x = init.to_vec();
        let mut trace = Vec::new();
        let mut iterations = 0;
        if !warm {
            iterations = self.descend(&mut x, opts, &mut trace).0;
        }
        let max_steps = 4 * x.len();
        let (steps, converged) = self.refine(&mut x, max_steps, opts.record_objective, &mut trace);
        let objective = self.evaluate(&x, None);
        Solution { theta: x, objective, iterations: iterations + steps, converged, trace }
    }
}

/// Euclidean projection onto `{x >= 0, sum x = 1}` (sort-and-threshold).
pub fn project_to_simplex(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - tau).max(0.0));
}

fn measured_vector(d: &PhotonDistribution, rows: usize) -> Vec<f64> {
    (0..rows).map(|n| d.probs().get(n).copied().unwrap_or(0.0)).collect()
}

fn model_vector(mu: f64, m: usize) -> Result<Vec<f64>> {
    Ok(poisson_dist(mu, m)?.probs)
}

/// Least-squares confusion matrix with `n_reported + 1` rows and
/// `m_actual + 1` columns, optionally with bootstrap standard deviations.
pub fn reconstruct_povm(
    probes: &[ProbeRecord],
    n_reported: usize,
    m_actual: usize,
    opts: &TomographyOptions,
) -> Result<TomographyResult> {
    let mut mus: Vec<f64> = probes.iter().map(|p| p.mu).collect();
    mus.sort_by(f64::total_cmp);
    mus.dedup();
    if mus.len() < 2 {
        return Err(Error::TooFewProbes(probes.len()));
    }
    for p in probes {
        if !(p.mu >= 0.0 && p.mu_sigma >= 0.0 && p.n_pulses >= 1) {
            return Err(invalid(format!("bad probe: mu {}, mu_sigma {}, n_pulses {}", p.mu, p.mu_sigma, p.n_pulses)));
        }
    }
    let (rows, cols) = (n_reported + 1, m_actual + 1);
    let mut warnings = Vec::new();
    let top = mus[mus.len() - 1];
    if top < m_actual as f64 {
        warnings.push(format!(
            "largest probe mean {top} does not reach M = {m_actual}; high-m columns are weakly constrained"
        ));
    }
    if probes.iter().any(|p| p.measured.truncation() > n_reported) {
        warnings.push(format!("measured outcomes above n = {n_reported} are ignored"));
    }
    if probes.iter().any(|p| p.measured.unclassified() > 0.0) {
        warnings.push("unclassified shares are ignored; measured vectors do not sum to one".into());
    }

    let p: Vec<Vec<f64>> = probes.iter().map(|pr| measured_vector(&pr.measured, rows)).collect();
    let q: Vec<Vec<f64>> = probes.iter().map(|pr| model_vector(pr.mu, m_actual)).collect::<Result<_>>()?;
    let problem = Problem::new(p, q, rows, cols);
    // start from the ideal detector
    let init: Vec<f64> = (0..rows * cols)
        .map(|i| f64::from(u8::from(i / cols == (i % cols).min(n_reported))))
        .collect();
    let sol = problem.solve(&init, opts, false);
    if !sol.converged {
        warnings.push(format!("NON_CONVERGED after {} iterations", sol.iterations));
        log::warn!("tomography did not converge in {} iterations", sol.iterations);
    }

    let std = if opts.bootstrap >= 2 {
        let replicas = par::map_indexed(opts.exec, opts.bootstrap, |b| {
            let mut rng = rng_for_range(opts.seed, b as u64);
            bootstrap_replica(probes, rows, m_actual, &sol.theta, opts, &mut rng)
        });
        let replicas = replicas.into_iter().collect::<Result<Vec<_>>>()?;
        let nb = replicas.len() as f64;
        Some(
            (0..rows * cols)
                .map(|i| {
                    let mean = replicas.iter().map(|r| r[i]).sum::<f64>() / nb;
                    let var = replicas.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (nb - 1.0);
                    var.sqrt()
                })
                .collect(),
        )
    } else {
        None
    };

    Ok(TomographyResult {
        theta: ConfusionMatrix { theta: sol.theta, n_reported, m_actual },
        std,
        objective: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
        objective_trace: sol.trace,
        warnings,
    })
}

/// Multinomial resampling of every probe's counts plus a Gaussian error on
/// its mean photon number, re-solved from `warm`.
fn bootstrap_replica(
    probes: &[ProbeRecord],
    rows: usize,
    m_actual: usize,
    warm: &[f64],
    opts: &TomographyOptions,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut p = Vec::with_capacity(probes.len());
    let mut q = Vec::with_capacity(probes.len());
    for pr in probes {
        let mut cats = pr.measured.with_unclassified_outcome();
        let total: f64 = cats.iter().sum();
        cats.iter_mut().for_each(|c| *c /= total);
        let counts = multinomial(pr.n_pulses, &cats, rng)?;
        let resampled: Vec<f64> = counts.iter().map(|&c| c as f64 / pr.n_pulses as f64).collect();
        p.push((0..rows).map(|n| if n + 1 < resampled.len() { resampled[n] } else { 0.0 }).collect());
        let mu = if pr.mu_sigma > 0.0 {
            let d = Normal::new(0.0, pr.mu_sigma).map_err(|e| invalid(e.to_string()))?;
            (pr.mu + d.sample(rng)).max(0.0)
        } else {
            pr.mu
        };
        q.push(model_vector(mu, m_actual)?);
    }
    let problem = Problem::new(p, q, rows, m_actual + 1);
    Ok(problem.solve(warm, opts, true).theta)
}

fn multinomial(n: u64, probs: &[f64], rng: &mut Rng) -> Result<Vec<u64>> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            out.push(left);
            break;
        }
        let c = if left == 0 || mass <= 0.0 {
            0
        } else {
            let r = (p / mass).clamp(0.0, 1.0);
            Binomial::new(left, r).map_err(|e| invalid(e.to_string()))?.sample(rng)
        };
        out.push(c);
        left -= c;
        mass -= p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe_mus() -> Vec<f64> {
        (0..12).map(|k| 0.25 * 32f64.powf(k as f64 / 11.0)).collect()
    }

    fn exact_probes(theta: &ConfusionMatrix, n_pulses: u64) -> Vec<ProbeRecord> {
        probe_mus()
            .into_iter()
            .map(|mu| {
                let q = poisson_dist(mu, theta.m_actual()).unwrap().probs;
                let p = theta.apply(&q);
                // unmodelled Poisson tail is kept as unclassified
                let tail = (1.0 - p.iter().sum::<f64>()).max(0.0);
                ProbeRecord {
                    mu,
                    mu_sigma: 0.0,
                    measured: PhotonDistribution::with_unclassified(p, tail).unwrap(),
                    n_pulses,
                }
            })
            .collect()
    }

    fn quick() -> TomographyOptions {
        TomographyOptions { bootstrap: 0, ..Default::default() }
    }

    #[test]
    fn simplex_projection() {
        let mut v = vec![0.5, 0.5];
        project_to_simplex(&mut v);
        assert_eq!(v, vec![0.5, 0.5]);
        let mut v = vec![2.0, 0.0];
        project_to_simplex(&mut v);
        assert_eq!(v, vec![1.0, 0.0]);
        let mut v = vec![0.4, 0.3, -0.2];
        project_to_simplex(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((v[0] - 0.55).abs() < 1e-15 && (v[1] - 0.45).abs() < 1e-15 && v[2] == 0.0);
    }

    #[test]
    fn one_probe_is_too_few() {
        let p = exact_probes(&ConfusionMatrix::identity(4), 1000);
        assert!(matches!(reconstruct_povm(&p[..1], 4, 4, &quick()), Err(Error::TooFewProbes(1))));
    }

    #[test]
    fn ideal_detector_is_recovered() {
        let truth = ConfusionMatrix::identity(16);
        let res = reconstruct_povm(&exact_probes(&truth, 1_000_000), 16, 16, &quick()).unwrap();
        for n in 0..=16 {
            for m in 0..=16 {
                if n != m {
                    assert!(res.theta.get(n, m) <= 1e-3);
                }
            }
        }
    }

    #[test]
    fn lossy_detector_and_monotone_objective() {
        let truth = ConfusionMatrix::binomial_loss(0.9, 8).unwrap();
        let opts = TomographyOptions { record_objective: true, ..quick() };
        let res = reconstruct_povm(&exact_probes(&truth, 1_000_000), 8, 8, &opts).unwrap();
        for w in res.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-300, "{} -> {}", w[0], w[1]);
        }
        for m in 0..=8 {
            let s: f64 = res.theta.column(m).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(res.theta.column(m).iter().all(|&t| t >= 0.0));
        }
        assert!(res.theta.max_abs_diff(&truth) < 5e-3, "{} {} {} {}", res.theta.max_abs_diff(&truth), res.iterations, res.converged, res.objective);
    }

    #[test]
    fn bootstrap_is_reproducible_and_execution_independent() {
        let truth = ConfusionMatrix::binomial_loss(0.8, 4).unwrap();
        let probes = exact_probes(&truth, 10_000);
        let opts = TomographyOptions { bootstrap: 8, seed: 3, max_iterations: 2000, exec: Exec::Sequential, ..Default::default() };
        let a = reconstruct_povm(&probes, 4, 4, &opts).unwrap();
        let b = reconstruct_povm(&probes, 4, 4, &TomographyOptions { exec: Exec::Parallel, ..opts }).unwrap();
        assert_eq!(a.std, b.std);
        assert!(a.std.unwrap().iter().any(|&s| s > 0.0));
    }

    #[test]
    fn binomial_loss_columns() {
        let t = ConfusionMatrix::binomial_loss(0.5, 3).unwrap();
        assert_eq!(t.column(2), vec![0.25, 0.5, 0.25, 0.0]);
        assert!(ConfusionMatrix::new(vec![0.5, 0.4], 1, 0).is_err());
    }
}
