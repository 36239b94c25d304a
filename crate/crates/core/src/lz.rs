//! Landau-Zener sweep `H = v t σz + g σx` with energy dephasing `L = H`.
//!
//! The excitation of a quench is the trace distance between the relaxed final
//! state and the adiabatic steady state. Since the Liouvillian is normal and
//! the steady axis `R₁(t) = (g, 0, vt)/ε` is its kernel, relaxation keeps the
//! axial component `R·R₁` and removes the transverse part, so the relaxed
//! distance is `(1 − R·R₁)/2`.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liouville::{ChannelClass, LiouvillianSpectrum, LiouvillianSystem};
use crate::propagate::{integrate_vec, IntegrationError, OdeOptions, TimeDependentSystem, Tolerances};

type C = Complex64;

/// `κg` above which the dressed slope is flagged as extrapolated.
pub const ALPHA_WARN_KG: f64 = 0.5;
/// Transverse magnitude below which relaxation counts as complete.
pub const RELAXED_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LzError {
    #[error("invalid LZ parameter: {0}")]
    Param(String),
    #[error("κg = {0} is outside the validity domain κg < 1 of the dressed slope")]
    OutOfDomain(f64),
    #[error("freeze-out equation has no sign change on (1e-12, {t_max}]")]
    NoRoot { t_max: f64 },
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LzParams {
    pub v: f64,
    pub g: f64,
    pub kappa: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl LzParams {
    /// Window `[-10, 10]`.
    pub fn new(v: f64, g: f64, kappa: f64) -> Result<Self, LzError> {
        Self::with_window(v, g, kappa, -10.0, 10.0)
    }

    pub fn with_window(v: f64, g: f64, kappa: f64, t_start: f64, t_end: f64) -> Result<Self, LzError> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(LzError::Param(format!("v must be > 0, got {v}")));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(LzError::Param(format!("g must be > 0, got {g}")));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(LzError::Param(format!("kappa must be >= 0, got {kappa}")));
        }
        if !(t_start < t_end) {
            return Err(LzError::Param(format!("need t_start < t_end, got [{t_start}, {t_end}]")));
        }
        Ok(Self { v, g, kappa, t_start, t_end })
    }

    pub fn epsilon(&self, t: f64) -> f64 {
        (self.v * t).hypot(self.g)
    }

    /// Steady axis `R₁(t)`.
    pub fn steady_axis(&self, t: f64) -> Vector3<f64> {
        Vector3::new(self.g, 0.0, self.v * t) / self.epsilon(t)
    }

    /// Spectral gap `ω(t) = 2 sqrt(κ² ε⁴ + ε²)`.
    pub fn omega(&self, t: f64) -> f64 {
        let e2 = self.epsilon(t).powi(2);
        2.0 * (self.kappa * self.kappa * e2 * e2 + e2).sqrt()
    }

    /// Transverse offset of a state following the moving steady axis,
    /// `g v / (2κ ε⁴)` (infinite for `κ = 0`).
    pub fn quasi_static_lag(&self, t: f64) -> f64 {
        let e2 = self.epsilon(t).powi(2);
        self.g.abs() * self.v / (2.0 * self.kappa * e2 * e2)
    }

    /// `πg²/v`.
    pub fn adiabaticity(&self) -> f64 {
        std::f64::consts::PI * self.g * self.g / self.v
    }
}

/// `M(t)` in closed form.
pub fn lz_matrix(p: &LzParams, t: f64) -> Matrix3<f64> {
    let (k, g, x) = (p.kappa, p.g, p.v * t);
    Matrix3::new(
        -k * x * x, -x, k * g * x,
        x, -k * (x * x + g * g), -g,
        k * g * x, g, -k * g * g,
    ) * 2.0
}

pub fn lz_system(p: &LzParams) -> TimeDependentSystem {
    let p = *p;
    let class = if p.kappa > 0.0 { ChannelClass::I } else { ChannelClass::ClosedSystem };
    TimeDependentSystem::new(
        move |t| LiouvillianSystem::new(lz_matrix(&p, t), Vector3::zeros(), class, p.kappa),
        p.t_start,
        p.t_end,
    )
}

/// Closed-form spectrum: `μ₁ = 0`, `μ₂,₃ = −2(κε² ∓ iε)`.
pub fn lz_eigensystem(p: &LzParams, t: f64) -> LiouvillianSpectrum {
    let e = p.epsilon(t);
    let x = p.v * t;
    let mu2 = C::new(-2.0 * p.kappa * e * e, 2.0 * e);
    let r1 = p.steady_axis(t).map(|a| C::new(a, 0.0));
    let s = 1.0 / (std::f64::consts::SQRT_2 * e);
    let r2 = Vector3::new(C::new(-x * s, 0.0), C::new(0.0, e * s), C::new(p.g * s, 0.0));
    let r3 = r2.map(|z| z.conj());
    let right = [r1, r2, r3];
    let left = right.map(|r| r.map(|z| z.conj()));
    let gap_defined = p.kappa > 0.0;
    LiouvillianSpectrum {
        eigenvalues: [C::new(0.0, 0.0), mu2, mu2.conj()],
        right,
        left,
        gap: if gap_defined { -mu2.re } else { 0.0 },
        gap_defined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationResult {
    /// `(1 − R·R₁)/2` at `t_end`, the distance after relaxation.
    pub excitation: f64,
    /// `|R − R₁|/2` at `t_end` before relaxation.
    pub raw_distance: f64,
    /// Magnitude of the component of `R(t_end)` transverse to `R₁(t_end)`.
    pub transverse: f64,
    /// `transverse < 1e-6`, or within 10x of the quasi-static lag
    /// `g v / (2κ ε⁴)` of a state dragged behind a moving axis.
    pub relaxed: bool,
    /// `|t_start| >= 5 max(g, 1)/v`.
    pub start_adiabatic: bool,
    pub final_state: [f64; 3],
}

pub fn simulate_excitation(p: &LzParams, tol: Tolerances) -> Result<ExcitationResult, LzError> {
    let start_adiabatic = p.t_start.abs() >= 5.0 * p.g.max(1.0) / p.v;
    if !start_adiabatic {
        log::warn!("t_start = {} is not deep in the adiabatic regime (v = {}, g = {})", p.t_start, p.v, p.g);
    }
    let sys = lz_system(p);
    let traj = integrate_vec(&sys, p.steady_axis(p.t_start), &OdeOptions::from(tol), &[])?;
    let r = traj.final_vector();
    let axis = p.steady_axis(p.t_end);
    let along = r.dot(&axis);
    let transverse = (r - axis * along).norm();
    Ok(ExcitationResult {
        excitation: (0.5 * (1.0 - along)).clamp(0.0, 1.0),
        raw_distance: 0.5 * (r - axis).norm(),
        transverse,
        relaxed: transverse < RELAXED_TOL || transverse < 10.0 * p.quasi_static_lag(p.t_end),
        start_adiabatic,
        final_state: traj.final_state,
    })
}

/// Dressed slope `α = π(1 − κg/2)` and whether it is extrapolated (`κg > 0.5`).
pub fn alpha_of(kappa: f64, g: f64) -> Result<(f64, bool), LzError> {
    let kg = kappa * g;
    if !(kg < 1.0) {
        return Err(LzError::OutOfDomain(kg));
    }
    let extrapolated = kg > ALPHA_WARN_KG;
    if extrapolated {
        log::warn!("κg = {kg} > {ALPHA_WARN_KG}: dressed slope is extrapolated");
    }
    Ok((std::f64::consts::PI * (1.0 - 0.5 * kg), extrapolated))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KzPrediction {
    pub t_hat: f64,
    pub alpha: f64,
    pub excitation: f64,
    pub extrapolated: bool,
}

/// Adiabatic-impulse estimate. The freeze-out time solves `α t̂ = 1/ω(t̂)`;
/// the state follows `R₁` up to `−t̂`, is frozen until `t̂`, and then relaxes
/// onto the axis, giving `(1 − R₁(−t̂)·R₁(t̂))/2 = (v t̂)²/ε²(t̂)`.
pub fn kz_predict(p: &LzParams) -> Result<KzPrediction, LzError> {
    let (alpha, extrapolated) = alpha_of(p.kappa, p.g)?;
    let phi = |t: f64| alpha * t - 1.0 / p.omega(t);
    let mut lo = 1e-12;
    let t_max = 10.0 * (p.g / p.v).max(1.0);
    let mut hi = t_max;
    if !(phi(lo) < 0.0 && phi(hi) > 0.0) {
        return Err(LzError::NoRoot { t_max });
    }
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton polish, kept inside the final bracket.
    let mut t = 0.5 * (lo + hi);
    for _ in 0..4 {
        let h = 1e-7 * t;
        let d = (phi(t + h) - phi(t - h)) / (2.0 * h);
        let next = t - phi(t) / d;
        if next.is_finite() && next > lo * (1.0 - 1e-12) && next < hi * (1.0 + 1e-12) {
            t = next;
        }
    }
    let x = p.v * t;
    Ok(KzPrediction { t_hat: t, alpha, excitation: x * x / p.epsilon(t).powi(2), extrapolated })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub g2_over_v: f64,
    pub kappa: f64,
    #[serde(rename = "D_numeric")]
    pub d_numeric: f64,
    #[serde(rename = "D_kz")]
    pub d_kz: f64,
    pub t_hat: f64,
}

/// Excitation against `g²/v` at fixed `g`, numerics next to the AI estimate.
/// Rows come back ordered by `κ`, then by `g²/v`.
pub fn lz_sweep(
    g: f64,
    x_grid: &[f64],
    kappas: &[f64],
    window: (f64, f64),
    tol: Tolerances,
) -> Result<Vec<SweepRow>, LzError> {
    let points: Vec<(f64, f64)> = kappas.iter().flat_map(|&k| x_grid.iter().map(move |&x| (k, x))).collect();
    points
        .par_iter()
        .map(|&(kappa, x)| {
            let p = LzParams::with_window(g * g / x, g, kappa, window.0, window.1)?;
            let num = simulate_excitation(&p, tol)?;
            let kz = kz_predict(&p)?;
            Ok(SweepRow { g2_over_v: x, kappa, d_numeric: num.excitation, d_kz: kz.excitation, t_hat: kz.t_hat })
        })
        .collect()
}
