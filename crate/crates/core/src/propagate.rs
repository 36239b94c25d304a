//! Adaptive Dormand-Prince 5(4) integration of `∂t R = M(t) R + b(t)`.
//!
//! The stepper works on flat `f64` slices so the same code drives qubit Bloch
//! vectors and the dense density-matrix oracle. Samples between accepted
//! steps come from cubic Hermite interpolation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::BlochVector;
use crate::liouville::{spectrum, LiouvilleError, LiouvillianSystem};

pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;
/// Samples may exceed the unit ball by this much.
pub const SAMPLE_NORM_SLACK: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("tolerances must be positive (rtol = {rtol}, atol = {atol})")]
    BadTolerance { rtol: f64, atol: f64 },
    #[error("invalid time window: {0}")]
    BadWindow(String),
    #[error("step size underflow at t = {t} (h = {h:e}); last good state kept")]
    StepUnderflow { t: f64, h: f64, last_state: Vec<f64> },
    #[error(
        "step budget of {steps} exhausted at t = {t}{}",
        if *stiff { "; the problem looks stiff, reduce kappa" } else { "" }
    )]
    MaxSteps { t: f64, steps: usize, stiff: bool, last_state: Vec<f64> },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("|R| = {norm} exceeds 1 at t = {t}; the generator is not a valid Liouvillian")]
    NonPhysical { t: f64, norm: f64 },
    #[error("initial state: {0}")]
    InitialState(String),
    #[error(transparent)]
    Spectrum(#[from] LiouvilleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: DEFAULT_RTOL, atol: DEFAULT_ATOL }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Result<Self, IntegrationError> {
        if !(rtol > 0.0 && atol > 0.0) {
            return Err(IntegrationError::BadTolerance { rtol, atol });
        }
        Ok(Self { rtol, atol })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { rtol: self.rtol * factor, atol: self.atol * factor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub tol: Tolerances,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { tol: Tolerances::default(), h_init: None, h_max: f64::INFINITY, max_steps: 5_000_000 }
    }
}

impl From<Tolerances> for OdeOptions {
    fn from(tol: Tolerances) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Accepted steps flagged by the Hairer stiffness test `h·ρ > 3.25`.
    pub stiff_steps: usize,
    pub h_min: f64,
    pub h_max: f64,
    /// Sum of unscaled local error estimates (max-norm), a crude bound on the
    /// global error for non-expanding flows.
    pub error_bound: f64,
}

pub(crate) struct OdeOutput {
    pub samples: Vec<(f64, Vec<f64>)>,
    pub y_end: Vec<f64>,
    pub stats: StepStats,
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn err_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerances) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = tol.atol + tol.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

// Continuous extension of order 4: y(t + θh) = y + h Σᵢ kᵢ Σⱼ P[i][j] θ^{j+1}.
const DENSE: [[f64; 4]; 7] = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
];

/// Local error targets are this much tighter than the requested tolerances,
/// so that the error accumulated over a long sweep stays near the request.
pub const LOCAL_TOL_FACTOR: f64 = 0.01;

fn dense_output(y0: &[f64], ks: [&[f64]; 7], h: f64, theta: f64) -> Vec<f64> {
    let pw = [theta, theta * theta, theta.powi(3), theta.powi(4)];
    let w: Vec<f64> = DENSE.iter().map(|row| row.iter().zip(&pw).map(|(a, b)| a * b).sum()).collect();
    (0..y0.len()).map(|i| y0[i] + h * (0..7).map(|s| w[s] * ks[s][i]).sum::<f64>()).collect()
}

/// Core stepper. `on_step` sees every accepted state and may modify it in
/// place (returning `true`), e.g. to re-symmetrize a density matrix.
pub(crate) fn dopri5<F, P>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    sample_times: &[f64],
    opts: &OdeOptions,
    mut on_step: P,
) -> Result<OdeOutput, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    P: FnMut(f64, &mut [f64]) -> Result<bool, IntegrationError>,
{
    let tol = Tolerances::new(opts.tol.rtol, opts.tol.atol)?.scaled(LOCAL_TOL_FACTOR);
    if !(t_end >= t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(IntegrationError::BadWindow(format!("need t_start <= t_end, got [{t0}, {t_end}]")));
    }
    if sample_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(IntegrationError::BadWindow("sample times must be strictly increasing".into()));
    }
    if sample_times.iter().any(|&s| s < t0 || s > t_end) {
        return Err(IntegrationError::BadWindow("sample time outside the integration window".into()));
    }

    let n = y0.len();
    let mut stats = StepStats { h_min: f64::INFINITY, ..StepStats::default() };
    let mut samples: Vec<(f64, Vec<f64>)> = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    let mut t = t0;
    let mut y = y0.to_vec();
    while next_sample < sample_times.len() && sample_times[next_sample] == t0 {
        samples.push((t0, y.clone()));
        next_sample += 1;
    }
    if t_end == t0 {
        return Ok(OdeOutput { samples, y_end: y, stats: StepStats { h_min: 0.0, ..stats } });
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y_stage6 = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    f(t, &y, &mut k1);
    stats.evaluations += 1;

    let span = t_end - t0;
    let mut h = match opts.h_init {
        Some(h) => h,
        None => {
            // Hairer-Norsett-Wanner starting step.
            let sc: Vec<f64> = y.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
            let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
            let d1 = (k1.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(span);
            for i in 0..n {
                ys[i] = y[i] + h0 * k1[i];
            }
            f(t + h0, &ys, &mut k2);
            stats.evaluations += 1;
            let d2 = (k2.iter().zip(&k1).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>()
                / n as f64)
                .sqrt()
                / h0;
            let m = d1.max(d2);
            let h1 = if m <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / m).powf(0.2) };
            (100.0 * h0).min(h1)
        }
    };
    h = h.min(opts.h_max).min(span);

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            let stiff = stats.stiff_steps * 2 > stats.accepted;
            return Err(IntegrationError::MaxSteps { t, steps: opts.max_steps, stiff, last_state: y });
        }
        let remaining = t_end - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        let h_floor = 16.0 * f64::EPSILON * t.abs().max(span);
        if h < h_floor {
            return Err(IntegrationError::StepUnderflow { t, h, last_state: y });
        }

        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &ys, &mut k5);
        for i in 0..n {
            y_stage6[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t_end } else { t + h };
        f(t_new, &y_stage6, &mut k6);
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t_new, &y_new, &mut k7);
        stats.evaluations += 6;
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = err_norm(&err, &y, &y_new, &tol);
        if !e.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h *= 0.1;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(IntegrationError::NonFinite { t });
            }
            continue;
        }

        if e <= 1.0 {
            stats.accepted += 1;
            stats.h_min = stats.h_min.min(h);
            stats.h_max = stats.h_max.max(h);
            stats.error_bound += err.iter().fold(0.0f64, |a, v| a.max(v.abs()));

            let num: f64 = k7.iter().zip(&k6).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = y_new.iter().zip(&y_stage6).map(|(a, b)| (a - b).powi(2)).sum();
            if den > 0.0 && h * (num / den).sqrt() > 3.25 {
                stats.stiff_steps += 1;
            }

            while next_sample < sample_times.len() && sample_times[next_sample] < t_new {
                let theta = (sample_times[next_sample] - t) / h;
                let ks = [&k1[..], &k2[..], &k3[..], &k4[..], &k5[..], &k6[..], &k7[..]];
                samples.push((sample_times[next_sample], dense_output(&y, ks, h, theta)));
                next_sample += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            if on_step(t, &mut y)? {
                f(t, &y, &mut k1);
                stats.evaluations += 1;
            }
            while next_sample < sample_times.len() && sample_times[next_sample] <= t {
                samples.push((sample_times[next_sample], y.clone()));
                next_sample += 1;
            }
            if last || t >= t_end {
                break;
            }
            let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * fac).min(opts.h_max);
        } else {
            stats.rejected += 1;
            let fac = (0.9 * e.powf(-0.2)).clamp(0.1, 1.0);
            h *= fac;
        }
    }
    if stats.h_min == f64::INFINITY {
        stats.h_min = 0.0;
    }
    Ok(OdeOutput { samples, y_end: y, stats })
}

type Generator = dyn Fn(f64) -> LiouvillianSystem + Send + Sync;

/// Generator `t ↦ (M(t), b(t))` on a time window.
#[derive(Clone)]
pub struct TimeDependentSystem {
    generator: Arc<Generator>,
    pub t_start: f64,
    pub t_end: f64,
}

impl fmt::Debug for TimeDependentSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeDependentSystem")
            .field("t_start", &self.t_start)
            .field("t_end", &self.t_end)
            .finish_non_exhaustive()
    }
}

impl TimeDependentSystem {
    pub fn new<G>(generator: G, t_start: f64, t_end: f64) -> Self
    where
        G: Fn(f64) -> LiouvillianSystem + Send + Sync + 'static,
    {
        Self { generator: Arc::new(generator), t_start, t_end }
    }

    /// Time-independent system.
    pub fn constant(sys: LiouvillianSystem, t_start: f64, t_end: f64) -> Self {
        Self::new(move |_| sys.clone(), t_start, t_end)
    }

    pub fn at(&self, t: f64) -> LiouvillianSystem {
        (self.generator)(t)
    }

    /// Same generator on another window.
    pub fn with_window(&self, t_start: f64, t_end: f64) -> Self {
        Self { generator: Arc::clone(&self.generator), t_start, t_end }
    }

    /// The generator frozen at `t_freeze`, run over `[0, duration]`.
    pub fn frozen(&self, t_freeze: f64, duration: f64) -> Self {
        Self::constant(self.at(t_freeze), 0.0, duration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<(f64, [f64; 3])>,
    pub final_time: f64,
    pub final_state: [f64; 3],
    pub tolerances: Tolerances,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn final_vector(&self) -> Vector3<f64> {
        Vector3::from(self.final_state)
    }

    pub fn sample_vectors(&self) -> impl Iterator<Item = (f64, Vector3<f64>)> + '_ {
        self.samples.iter().map(|(t, r)| (*t, Vector3::from(*r)))
    }

    /// CSV with columns `t, Rx, Ry, Rz`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,Rx,Ry,Rz")?;
        for (t, r) in &self.samples {
            writeln!(w, "{t},{},{},{}", r[0], r[1], r[2])?;
        }
        Ok(())
    }
}

fn qubit_initial(r0: &BlochVector) -> Result<Vector3<f64>, IntegrationError> {
    let r = r0.to_vector3().map_err(|e| IntegrationError::InitialState(e.to_string()))?;
    if r.norm() > 1.0 + crate::bloch::NORM_TOL {
        return Err(IntegrationError::InitialState(format!("|R0| = {} > 1", r.norm())));
    }
    Ok(r)
}

/// Integrates over the system window and records its two endpoints.
pub fn integrate(sys: &TimeDependentSystem, r0: &BlochVector, rtol: f64, atol: f64) -> Result<Trajectory, IntegrationError> {
    integrate_sampled(sys, r0, &OdeOptions::from(Tolerances::new(rtol, atol)?), &[sys.t_start, sys.t_end])
}

/// Integrates and reports the state at each of `sample_times`.
pub fn integrate_sampled(
    sys: &TimeDependentSystem,
    r0: &BlochVector,
    opts: &OdeOptions,
    sample_times: &[f64],
) -> Result<Trajectory, IntegrationError> {
    let r = qubit_initial(r0)?;
    integrate_vec(sys, r, opts, sample_times)
}

/// [`integrate_sampled`] on a raw `Vector3`.
pub fn integrate_vec(
    sys: &TimeDependentSystem,
    r0: Vector3<f64>,
    opts: &OdeOptions,
    sample_times: &[f64],
) -> Result<Trajectory, IntegrationError> {
    let limit = 1.0 + 100.0 * opts.tol.atol;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let s = sys.at(t);
        let d = s.rhs(&Vector3::new(y[0], y[1], y[2]));
        dy.copy_from_slice(d.as_slice());
    };
    let check = |t: f64, y: &mut [f64]| {
        let norm = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        if norm > limit.max(r0.norm() + 100.0 * opts.tol.atol) {
            return Err(IntegrationError::NonPhysical { t, norm });
        }
        Ok(false)
    };
    let out = dopri5(rhs, sys.t_start, r0.as_slice(), sys.t_end, sample_times, opts, check)?;
    let samples = out.samples.into_iter().map(|(t, y)| (t, [y[0], y[1], y[2]])).collect::<Vec<_>>();
    if let Some((t, r)) = samples.iter().find(|(_, r)| Vector3::from(*r).norm() > 1.0 + SAMPLE_NORM_SLACK) {
        return Err(IntegrationError::NonPhysical { t: *t, norm: Vector3::from(*r).norm() });
    }
    Ok(Trajectory {
        samples,
        final_time: sys.t_end,
        final_state: [out.y_end[0], out.y_end[1], out.y_end[2]],
        tolerances: opts.tol,
        stats: out.stats,
    })
}

/// Difference between the final state at the given tolerances and at
/// tolerances 32 times tighter (half the step size for a fifth-order method).
pub fn richardson_error(sys: &TimeDependentSystem, r0: &BlochVector, tol: Tolerances) -> Result<f64, IntegrationError> {
    let coarse = integrate(sys, r0, tol.rtol, tol.atol)?;
    let fine_tol = tol.scaled(1.0 / 32.0);
    let fine = integrate(sys, r0, fine_tol.rtol, fine_tol.atol)?;
    Ok((coarse.final_vector() - fine.final_vector()).norm())
}

/// Classical fixed-step RK4, used as an independent reference.
pub fn integrate_rk4_fixed(sys: &TimeDependentSystem, r0: Vector3<f64>, steps: usize) -> Vector3<f64> {
    let h = (sys.t_end - sys.t_start) / steps as f64;
    let f = |t: f64, r: &Vector3<f64>| sys.at(t).rhs(r);
    let mut r = r0;
    for i in 0..steps {
        let t = sys.t_start + i as f64 * h;
        let k1 = f(t, &r);
        let k2 = f(t + 0.5 * h, &(r + k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(r + k2 * (0.5 * h)));
        let k4 = f(t + h, &(r + k3 * h));
        r += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    r
}

/// Ratios `|Lj Ṁ Ri| / |μi − μj|²` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticityReport {
    /// `ratios[i][j]`, zero on the diagonal, `+inf` where `ωij < 1e-12`.
    pub ratios: [[f64; 3]; 3],
    pub degenerate: bool,
}

impl AdiabaticityReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// `Ṁ` is a central difference with step `1e-6 · max(|t|, 1)`.
pub fn adiabaticity_diagnostic(sys: &TimeDependentSystem, t: f64) -> Result<AdiabaticityReport, IntegrationError> {
    let sp = spectrum(&sys.at(t))?;
    let h = 1e-6 * t.abs().max(1.0);
    let md: Matrix3<f64> = (sys.at(t + h).m - sys.at(t - h).m) / (2.0 * h);
    let mdc = md.map(|x| Complex64::new(x, 0.0));
    let mut ratios = [[0.0; 3]; 3];
    let mut degenerate = false;
    for i in 0..3 {
        let v = mdc * sp.right[i];
        for j in 0..3 {
            if i == j {
                continue;
            }
            let w = (sp.eigenvalues[i] - sp.eigenvalues[j]).norm();
            if w < 1e-12 {
                ratios[i][j] = f64::INFINITY;
                degenerate = true;
            } else {
                ratios[i][j] = sp.project(j, &v).norm() / (w * w);
            }
        }
    }
    Ok(AdiabaticityReport { ratios, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::{assemble, steady_states, JumpChannel, QubitHamiltonian};
    use approx::assert_abs_diff_eq;

    fn lz(v: f64, g: f64, kappa: f64, t0: f64, t1: f64) -> TimeDependentSystem {
        TimeDependentSystem::new(
            move |t| {
                let h = QubitHamiltonian::new(v * t, g);
                assemble(&h, &[JumpChannel::from_hamiltonian(&h, kappa).unwrap()])
            },
            t0,
            t1,
        )
    }

    #[test]
    fn dopri_exponential() {
        let out = dopri5(
            |_, y, d| d[0] = -y[0],
            0.0,
            &[1.0],
            3.0,
            &[0.5, 1.0, 2.5],
            &OdeOptions::default(),
            |_, _| Ok(false),
        )
        .unwrap();
        assert_abs_diff_eq!(out.y_end[0], (-3.0f64).exp(), epsilon = 1e-9);
        for (t, y) in &out.samples {
            // Hermite interpolation is third order; the step sizes here are small.
            assert_abs_diff_eq!(y[0], (-t).exp(), epsilon = 1e-7);
        }
    }

    #[test]
    fn bad_inputs() {
        let sys = lz(1.0, 1.0, 0.0, 0.0, 1.0);
        let r0 = BlochVector::qubit(0.0, 0.0, 1.0);
        assert!(matches!(integrate(&sys, &r0, 0.0, 1e-10), Err(IntegrationError::BadTolerance { .. })));
        assert!(integrate(&sys, &BlochVector::qubit(1.0, 1.0, 0.0), 1e-8, 1e-10).is_err());
        let back = sys.with_window(1.0, 0.0);
        assert!(matches!(integrate(&back, &r0, 1e-8, 1e-10), Err(IntegrationError::BadWindow(_))));
    }

    #[test]
    fn dephasing_closed_form() {
        let k = 0.3;
        let sys = assemble(&QubitHamiltonian::new(0.0, 0.0), &[JumpChannel::hermitian(Vector3::z(), k).unwrap()]);
        let td = TimeDependentSystem::constant(sys, 0.0, 5.0);
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let tr = integrate_sampled(&td, &BlochVector::qubit(0.6, 0.0, 0.8), &OdeOptions::default(), &times).unwrap();
        for (t, r) in tr.sample_vectors() {
            assert_abs_diff_eq!(r[2], 0.8, epsilon = 1e-14);
            assert_abs_diff_eq!(r[0], 0.6 * (-2.0 * k * t).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn relaxation_to_unique_steady_state() {
        let k = 0.5;
        let sys = assemble(&QubitHamiltonian::new(0.0, 0.0), &[JumpChannel::sigma_minus(k).unwrap()]);
        let target = steady_states(&sys).unique().unwrap();
        let td = TimeDependentSystem::constant(sys, 0.0, 30.0 / k);
        let tr = integrate_sampled(&td, &BlochVector::qubit(0.0, 0.0, -1.0), &OdeOptions::default(), &[10.0 / k, 30.0 / k])
            .unwrap();
        // Rz(t) = 1 − 2 e^{−κ t}
        assert_abs_diff_eq!(tr.samples[0].1[2], 1.0 - 2.0 * (-10.0f64).exp(), epsilon = 1e-8);
        assert!((tr.final_vector() - target).norm() < 1e-10);
    }

    #[test]
    fn closed_lz_norm_and_rk4_agreement() {
        let (v, g) = (1.0, 0.5);
        let sys = lz(v, g, 0.0, -10.0, 10.0);
        let r0 = Vector3::new(g, 0.0, -10.0 * v).normalize();
        let tr = integrate_vec(&sys, r0, &OdeOptions::default(), &[]).unwrap();
        assert_abs_diff_eq!(tr.final_vector().norm(), 1.0, epsilon = 1e-8);
        let reference = integrate_rk4_fixed(&sys, r0, 200_000);
        assert!((tr.final_vector() - reference).norm() < 5.0 * DEFAULT_RTOL * 10.0);
    }

    #[test]
    fn static_diagnostic_is_zero() {
        let h = QubitHamiltonian::new(0.3, 0.5);
        let sys = TimeDependentSystem::constant(assemble(&h, &[JumpChannel::from_hamiltonian(&h, 0.2).unwrap()]), 0.0, 1.0);
        let rep = adiabaticity_diagnostic(&sys, 0.5).unwrap();
        assert_eq!(rep.max_ratio(), 0.0);
    }

    #[test]
    fn impulse_regime_ratio() {
        let g = 0.1;
        for v in [1.0, 10.0] {
            let sys = lz(v, g, 0.1, -1.0, 1.0);
            let rep = adiabaticity_diagnostic(&sys, 0.0).unwrap();
            assert!(rep.ratios[0][1] > 1.0, "v = {v}: {:?}", rep.ratios);
        }
    }

    #[test]
    fn csv_export() {
        let sys = lz(1.0, 1.0, 0.0, 0.0, 1.0);
        let tr = integrate(&sys, &BlochVector::qubit(0.0, 0.0, 1.0), 1e-8, 1e-10).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,Rx,Ry,Rz\n0,0,0,1\n"));
        assert_eq!(s.lines().count(), 3);
    }
}
