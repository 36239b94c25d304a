//! Power-law fits `n_D ≈ A τ_Q^μ` by least squares on `(ln τ_Q, ln n_D)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ising::ScalingPoint;

pub const MIN_POINTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {MIN_POINTS} points inside the fit window, got {0}")]
    TooFewPoints(usize),
    #[error("non-positive or non-finite data at tau_Q = {tau_q}: n_D = {n_d}")]
    BadData { tau_q: f64, n_d: f64 },
    #[error("all tau_Q values coincide")]
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub mu: f64,
    pub log_prefactor: f64,
    pub stderr_mu: f64,
    pub residual_rms: f64,
    pub points: usize,
}

/// The JSON record written per κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub kappa: f64,
    pub mu: f64,
    pub stderr: f64,
    pub prefactor: f64,
}

impl ScalingFit {
    pub fn prefactor(&self) -> f64 {
        self.log_prefactor.exp()
    }

    pub fn predict(&self, tau_q: f64) -> f64 {
        self.prefactor() * tau_q.powf(self.mu)
    }

    pub fn summary(&self, kappa: f64) -> FitSummary {
        FitSummary { kappa, mu: self.mu, stderr: self.stderr_mu, prefactor: self.prefactor() }
    }
}

/// Ordinary least squares of `ln n_D` on `ln τ_Q`, restricted to `window`
/// (inclusive) when given.
pub fn fit_power_law(tau_q: &[f64], n_d: &[f64], window: Option<(f64, f64)>) -> Result<ScalingFit, FitError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &n) in tau_q.iter().zip(n_d) {
        if let Some((lo, hi)) = window {
            if t < lo || t > hi {
                continue;
            }
        }
        if !(t > 0.0 && n > 0.0 && t.is_finite() && n.is_finite()) {
            return Err(FitError::BadData { tau_q: t, n_d: n });
        }
        xs.push(t.ln());
        ys.push(n.ln());
    }
    let m = xs.len();
    if m < MIN_POINTS {
        return Err(FitError::TooFewPoints(m));
    }
    let mf = m as f64;
    let xbar = xs.iter().sum::<f64>() / mf;
    let ybar = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx <= f64::EPSILON * mf * (1.0 + xbar * xbar) {
        return Err(FitError::Degenerate);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let mu = sxy / sxx;
    let intercept = ybar - mu * xbar;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - mu * x).powi(2)).sum();
    let stderr_mu = (ss_res / (mf - 2.0) / sxx).sqrt();
    Ok(ScalingFit { mu, log_prefactor: intercept, stderr_mu, residual_rms: (ss_res / mf).sqrt(), points: m })
}

/// One fit per distinct κ, in order of first appearance.
pub fn fit_sweep(points: &[ScalingPoint], window: Option<(f64, f64)>) -> Result<Vec<(f64, ScalingFit)>, FitError> {
    let mut kappas: Vec<f64> = Vec::new();
    for p in points {
        if !kappas.contains(&p.kappa) {
            kappas.push(p.kappa);
        }
    }
    kappas
        .into_iter()
        .map(|k| {
            let (t, n): (Vec<f64>, Vec<f64>) = points.iter().filter(|p| p.kappa == k).map(|p| (p.tau_q, p.n_d)).unzip();
            fit_power_law(&t, &n, window).map(|f| (k, f))
        })
        .collect()
}

/// `n` points geometrically spaced from `lo` to `hi` inclusive.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let r = (hi / lo).ln() / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo * (r * i as f64).exp() }).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_power_law() {
        let t = geomspace(10.0, 320.0, 6);
        let n: Vec<f64> = t.iter().map(|x| 0.11 * x.powf(-0.5)).collect();
        let f = fit_power_law(&t, &n, None).unwrap();
        assert_abs_diff_eq!(f.mu, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.prefactor(), 0.11, epsilon = 1e-12);
        assert!(f.stderr_mu < 1e-12);
    }

    #[test]
    fn window_and_errors() {
        let t = geomspace(1.0, 1000.0, 10);
        let n: Vec<f64> = t.iter().map(|x| 2.0 / x).collect();
        let f = fit_power_law(&t, &n, Some((5.0, 1000.0))).unwrap();
        assert_eq!(f.points, 7);
        assert!(matches!(fit_power_law(&t[..4], &n[..4], None), Err(FitError::TooFewPoints(4))));
        let mut bad = n.clone();
        bad[3] = 0.0;
        assert!(matches!(fit_power_law(&t, &bad, None), Err(FitError::BadData { .. })));
        assert!(matches!(fit_power_law(&[3.0; 6], &[1.0; 6], None), Err(FitError::Degenerate)));
    }

    #[test]
    fn geomspace_endpoints() {
        let g = geomspace(10.0, 320.0, 6);
        assert_eq!(g[0], 10.0);
        assert_eq!(g[5], 320.0);
        assert_abs_diff_eq!(g[1], 20.0, epsilon = 1e-12);
    }
}
