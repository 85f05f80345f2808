//! Detector efficiency from a straight-line fit through the origin with
//! errors in both coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    /// Incident mean photon number and its uncertainty.
    pub mu_in: f64,
    pub sigma_in: f64,
    /// Detected mean photon number and its uncertainty.
    pub mu_meas: f64,
    pub sigma_meas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyFit {
    pub eta: f64,
    pub eta_sigma: f64,
    pub chi2: f64,
}

const ETA_MAX: f64 = 2.0;
const TOLERANCE: f64 = 1e-9;

fn chi2(points: &[EfficiencyPoint], eta: f64) -> f64 {
    points
        .iter()
        .map(|p| {
            let r = p.mu_meas - eta * p.mu_in;
            r * r / (p.sigma_meas * p.sigma_meas + eta * eta * p.sigma_in * p.sigma_in)
        })
        .sum()
}

/// Minimises `sum (y - eta x)^2 / (sy^2 + eta^2 sx^2)` over `eta` in `(0, 2]`
/// by golden-section search. `eta_sigma` is `sqrt(2 / chi2'')` at the minimum.
pub fn fit_efficiency(points: &[EfficiencyPoint]) -> Result<EfficiencyFit> {
    if points.len() < 2 {
        return Err(invalid(format!("need at least two points, got {}", points.len())));
    }
    for p in points {
        let finite = [p.mu_in, p.sigma_in, p.mu_meas, p.sigma_meas].iter().all(|v| v.is_finite());
        if !finite || !(p.sigma_in > 0.0 && p.sigma_meas > 0.0) {
            return Err(invalid("every point needs finite values and positive uncertainties"));
        }
    }
    if points.iter().all(|p| p.mu_in == 0.0) {
        return Err(Error::Degenerate("all incident means are zero".into()));
    }

    let f = |eta: f64| chi2(points, eta);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, ETA_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let eta = if f(b) < f(0.5 * (a + b)) { b } else { 0.5 * (a + b) };

    let h = 1e-4 * eta.max(1e-3);
    let curvature = (f(eta + h) - 2.0 * f(eta) + f(eta - h)) / (h * h);
    let eta_sigma = if curvature > 0.0 { (2.0 / curvature).sqrt() } else { f64::INFINITY };
    Ok(EfficiencyFit { eta, eta_sigma, chi2: f(eta) })
}
