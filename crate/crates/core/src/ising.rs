//! Transverse-field Ising chain `H = −Σ (σᶻᵢσᶻᵢ₊₁ + g σˣᵢ)` quenched by
//! `g(t) = −t/τ_Q`, with energy dephasing `L = H`.
//!
//! After Jordan-Wigner and Fourier transform the even-parity sector splits
//! into independent pair modes `k = π(2m−1)/N`. Each mode is a qubit with
//! field `h_k = (2 sin k, 0, 2(g − cos k))`, dephased by its own Hamiltonian.
//! Bloch encoding: `n_k = (1 + R_z)/2` and `⟨c₋ₖ cₖ⟩ = −(R_y + i R_x)/2`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liouville::{ChannelClass, LiouvillianSystem};
use crate::propagate::{integrate_vec, IntegrationError, OdeOptions, TimeDependentSystem, Tolerances};

/// Transverse magnitude below which a mode counts as relaxed.
pub const RELAX_TOL: f64 = 1e-6;
const MAX_RELAX_DOUBLINGS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsingError {
    #[error("invalid Ising parameter: {0}")]
    Param(String),
    #[error("mode k = {k}: {source}")]
    Mode { k: f64, source: IntegrationError },
    #[error("mode k = {k} did not relax (transverse {transverse:e} after extended integration)")]
    NoRelaxation { k: f64, transverse: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "tau_Q")]
    pub tau_q: f64,
    pub kappa: f64,
    pub g_start: f64,
    pub g_end: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl IsingParams {
    /// Quench from `g = 4` to `g = 0` at default tolerances.
    pub fn new(n: usize, tau_q: f64, kappa: f64) -> Result<Self, IsingError> {
        let tol = Tolerances::default();
        Self { n, tau_q, kappa, g_start: 4.0, g_end: 0.0, rtol: tol.rtol, atol: tol.atol }.validated()
    }

    pub fn validated(self) -> Result<Self, IsingError> {
        if self.n == 0 || self.n % 2 != 0 {
            return Err(IsingError::Param(format!("N must be even and positive, got {}", self.n)));
        }
        if !(self.tau_q > 0.0 && self.tau_q.is_finite()) {
            return Err(IsingError::Param(format!("tau_Q must be > 0, got {}", self.tau_q)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(IsingError::Param(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.g_start > self.g_end) {
            return Err(IsingError::Param(format!(
                "g decreases in time: need g_start > g_end, got {} -> {}",
                self.g_start, self.g_end
            )));
        }
        Tolerances::new(self.rtol, self.atol).map_err(|e| IsingError::Param(e.to_string()))?;
        Ok(self)
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { rtol: self.rtol, atol: self.atol }
    }

    /// Clock time at which the field equals `g`.
    pub fn time_of(&self, g: f64) -> f64 {
        -g * self.tau_q
    }

    pub fn field_at(&self, t: f64) -> f64 {
        -t / self.tau_q
    }
}

/// Positive momenta of the antiperiodic grid, `π(2m−1)/N`.
pub fn momentum_grid(n: usize) -> Result<Vec<f64>, IsingError> {
    if n == 0 || n % 2 != 0 {
        return Err(IsingError::Param(format!("N must be even and positive, got {n}")));
    }
    Ok((1..=n / 2).map(|m| std::f64::consts::PI * (2 * m - 1) as f64 / n as f64).collect())
}

/// Quasiparticle energy `2 sqrt((g − cos k)² + sin² k)`.
pub fn dispersion(g: f64, k: f64) -> f64 {
    2.0 * (g - k.cos()).hypot(k.sin())
}

/// Field vector of mode `k` at transverse field `g`.
pub fn mode_field(k: f64, g: f64) -> Vector3<f64> {
    Vector3::new(2.0 * k.sin(), 0.0, 2.0 * (g - k.cos()))
}

/// `M = 2[h]ₓ + 2κ(h hᵀ − |h|² 1)`, the Bloch generator for `H = L = h·σ`.
pub fn mode_matrix(h: &Vector3<f64>, kappa: f64) -> Matrix3<f64> {
    let skew = Matrix3::new(0.0, -h[2], h[1], h[2], 0.0, -h[0], -h[1], h[0], 0.0);
    skew * 2.0 + (h * h.transpose() - Matrix3::identity() * h.norm_squared()) * (2.0 * kappa)
}

pub fn mode_system(k: f64, tau_q: f64, kappa: f64) -> TimeDependentSystem {
    let class = if kappa > 0.0 { ChannelClass::I } else { ChannelClass::ClosedSystem };
    TimeDependentSystem::new(
        move |t| {
            let h = mode_field(k, -t / tau_q);
            LiouvillianSystem::new(mode_matrix(&h, kappa), Vector3::zeros(), class, kappa)
        },
        f64::NEG_INFINITY,
        f64::INFINITY,
    )
}

/// Landau-Zener form of a closed mode. With `τ = 2τ_Q sin k (t/τ_Q + cos k)/g₀`
/// the mode evolves as `i∂τψ = [[−vτ, g₀],[g₀, vτ]]ψ`, `v = g₀²/(2τ_Q sin² k)`,
/// which is the standard sweep conjugated by `σx`: `(Rx, Ry, Rz) ↦ (Rx, −Ry, −Rz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LzMapping {
    pub k: f64,
    pub tau_q: f64,
    pub g0: f64,
    pub v: f64,
}

impl LzMapping {
    pub fn new(k: f64, tau_q: f64, g0: f64) -> Self {
        let s = k.sin();
        Self { k, tau_q, g0, v: g0 * g0 / (2.0 * tau_q * s * s) }
    }

    pub fn tau(&self, t: f64) -> f64 {
        2.0 * self.tau_q * self.k.sin() * (t / self.tau_q + self.k.cos()) / self.g0
    }

    pub fn to_lz(r: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(r[0], -r[1], -r[2])
    }
}

/// Per-mode Bloch vectors at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEnsemble {
    pub n_sites: usize,
    pub momenta: Vec<f64>,
    pub bloch: Vec<[f64; 3]>,
    pub time: f64,
    pub field: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectResult {
    pub n_d: f64,
    pub per_mode: Vec<f64>,
    /// Largest transverse component left after relaxation (0 for κ = 0,
    /// where the excitation is the adiabatic-basis population).
    pub max_transverse: f64,
}

/// Order-independent pairwise sum.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

struct ModeOutcome {
    state: Vector3<f64>,
    p: f64,
    transverse: f64,
}

fn run_mode(k: f64, p: &IsingParams) -> Result<ModeOutcome, IsingError> {
    let wrap = |source| IsingError::Mode { k, source };
    let t0 = p.time_of(p.g_start);
    let t1 = p.time_of(p.g_end);
    let sys = mode_system(k, p.tau_q, p.kappa).with_window(t0, t1);
    let r0 = -mode_field(k, p.g_start).normalize();
    let opts = OdeOptions::from(p.tolerances());
    let traj = integrate_vec(&sys, r0, &opts, &[]).map_err(wrap)?;
    let state = traj.final_vector();

    let h = mode_field(k, p.g_end);
    let axis = -h.normalize();
    let mut r = state;
    let mut transverse = (r - axis * r.dot(&axis)).norm();
    if p.kappa > 0.0 && transverse > RELAX_TOL {
        // Frozen generator; transverse decay rate 2κ|h|².
        let rate = 2.0 * p.kappa * h.norm_squared();
        let frozen = TimeDependentSystem::constant(
            LiouvillianSystem::new(mode_matrix(&h, p.kappa), Vector3::zeros(), ChannelClass::I, p.kappa),
            0.0,
            1.0,
        );
        let mut span = 1.0 / rate;
        let mut done = 0;
        while transverse > RELAX_TOL {
            if done >= MAX_RELAX_DOUBLINGS {
                return Err(IsingError::NoRelaxation { k, transverse });
            }
            let seg = frozen.with_window(0.0, span);
            r = integrate_vec(&seg, r, &opts, &[]).map_err(wrap)?.final_vector();
            transverse = (r - axis * r.dot(&axis)).norm();
            span *= 2.0;
            done += 1;
        }
    }
    let along = r.dot(&axis);
    let relaxed_transverse = if p.kappa > 0.0 { transverse } else { 0.0 };
    Ok(ModeOutcome { state, p: (0.5 * (1.0 - along)).clamp(0.0, 1.0), transverse: relaxed_transverse })
}

/// Quench every mode from `g_start` to `g_end`. The ensemble holds the states
/// at `g_end` before relaxation; `p_k` is measured after it.
pub fn run_quench(p: &IsingParams) -> Result<(ModeEnsemble, DefectResult), IsingError> {
    let p = p.validated()?;
    let momenta = momentum_grid(p.n)?;
    let outcomes: Vec<ModeOutcome> = momenta.par_iter().map(|&k| run_mode(k, &p)).collect::<Result<_, _>>()?;
    let per_mode: Vec<f64> = outcomes.iter().map(|o| o.p).collect();
    let n_d = 2.0 / p.n as f64 * pairwise_sum(&per_mode);
    let max_transverse = outcomes.iter().map(|o| o.transverse).fold(0.0, f64::max);
    let ensemble = ModeEnsemble {
        n_sites: p.n,
        momenta,
        bloch: outcomes.iter().map(|o| [o.state[0], o.state[1], o.state[2]]).collect(),
        time: p.time_of(p.g_end),
        field: p.g_end,
    };
    Ok((ensemble, DefectResult { n_d, per_mode, max_transverse }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub kappa: f64,
    pub tau_q: f64,
    pub n_d: f64,
}

/// `n_D` over a `(κ, τ_Q)` grid, ordered by `κ` then `τ_Q`.
pub fn defect_sweep(base: &IsingParams, kappas: &[f64], taus: &[f64]) -> Result<Vec<ScalingPoint>, IsingError> {
    let points: Vec<(f64, f64)> = kappas.iter().flat_map(|&k| taus.iter().map(move |&t| (k, t))).collect();
    points
        .par_iter()
        .map(|&(kappa, tau_q)| {
            let p = IsingParams { kappa, tau_q, ..*base };
            run_quench(&p).map(|(_, d)| ScalingPoint { kappa, tau_q, n_d: d.n_d })
        })
        .collect()
}
