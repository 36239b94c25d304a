//! Brute-force references: the full `2^N` Lindblad evolution of a short
//! Ising ring and dense superoperators in Bloch coordinates.
//!
//! Jordan-Wigner convention: `σˣⱼ = 1 − 2nⱼ` and
//! `cⱼ = (∏_{l<j} σˣₗ) aⱼ` with `aⱼ = −|+⟩⟨−|ⱼ`, so that
//! `σᶻⱼ = −(c†ⱼ + cⱼ) ∏_{l<j}(1 − 2nₗ)` and `σᶻⱼσᶻⱼ₊₁ = BⱼAⱼ₊₁`.
//! Momentum operators are `c_k = N^{-1/2} Σⱼ e^{−ikj} cⱼ`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::{hermitian_deviation, hermitian_eigenvalues, BlochError, DensityMatrix, GellMannBasis};
use crate::ising::{momentum_grid, IsingError};
use crate::propagate::{dopri5, IntegrationError, OdeOptions, Tolerances};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Largest chain handled by the dense oracle.
pub const MAX_SITES: usize = 6;
/// Negative eigenvalues beyond this are a bug, not round-off.
pub const POSITIVITY_ERROR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("N = {0} outside the oracle range 1..={MAX_SITES}")]
    TooLarge(usize),
    #[error("dimension mismatch: system {system}, state {state}")]
    Dimension { system: usize, state: usize },
    #[error("Hamiltonian not Hermitian at t = {t} (deviation {deviation:e})")]
    NotHermitian { t: f64, deviation: f64 },
    #[error("positivity violated at t = {t}: eigenvalue {eigenvalue:e}")]
    Positivity { t: f64, eigenvalue: f64 },
    #[error("time grid must be strictly increasing with at least one point")]
    BadGrid,
    #[error("ground state is degenerate (gap {gap:e}) or has no definite parity ({parity})")]
    AmbiguousGroundState { gap: f64, parity: f64 },
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Bloch(#[from] BlochError),
    #[error(transparent)]
    Ising(#[from] IsingError),
    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache manifest: {0}")]
    Json(#[from] serde_json::Error),
}

type MatrixFn = dyn Fn(f64) -> DMatrix<C> + Send + Sync;

/// `dρ/dt = −i[H, ρ] + κ (LρL† − ½{L†L, ρ})` with dense, time-dependent `H`, `L`.
#[derive(Clone)]
pub struct DenseLindbladSystem {
    dim: usize,
    hamiltonian: Arc<MatrixFn>,
    /// `None` means `L = H`.
    jump: Option<Arc<MatrixFn>>,
    pub kappa: f64,
}

impl fmt::Debug for DenseLindbladSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseLindbladSystem").field("dim", &self.dim).field("kappa", &self.kappa).finish_non_exhaustive()
    }
}

impl DenseLindbladSystem {
    pub fn new<H, L>(dim: usize, hamiltonian: H, jump: L, kappa: f64) -> Result<Self, OracleError>
    where
        H: Fn(f64) -> DMatrix<C> + Send + Sync + 'static,
        L: Fn(f64) -> DMatrix<C> + Send + Sync + 'static,
    {
        check_dim(dim)?;
        Ok(Self { dim, hamiltonian: Arc::new(hamiltonian), jump: Some(Arc::new(jump)), kappa })
    }

    /// Dephasing in the instantaneous energy basis, `L = H(t)`. The
    /// dissipator reduces to `−(κ/2)[H, [H, ρ]]`.
    pub fn energy_dephasing<H>(dim: usize, hamiltonian: H, kappa: f64) -> Result<Self, OracleError>
    where
        H: Fn(f64) -> DMatrix<C> + Send + Sync + 'static,
    {
        check_dim(dim)?;
        Ok(Self { dim, hamiltonian: Arc::new(hamiltonian), jump: None, kappa })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self, t: f64) -> DMatrix<C> {
        (self.hamiltonian)(t)
    }

    pub fn jump(&self, t: f64) -> DMatrix<C> {
        match &self.jump {
            Some(l) => l(t),
            None => self.hamiltonian(t),
        }
    }

    /// Right-hand side at time `t`.
    pub fn apply(&self, t: f64, rho: &DMatrix<C>) -> DMatrix<C> {
        let h = self.hamiltonian(t);
        match &self.jump {
            Some(l) => lindbladian(&h, &[(l(t), self.kappa)], rho),
            None => {
                let a = &h * rho - rho * &h;
                let b = &h * &a - &a * &h;
                a * C::new(0.0, -1.0) - b * C::new(0.5 * self.kappa, 0.0)
            }
        }
    }
}

/// `−i[H, ρ] + Σ κ (LρL† − ½{L†L, ρ})`.
pub fn lindbladian(h: &DMatrix<C>, jumps: &[(DMatrix<C>, f64)], rho: &DMatrix<C>) -> DMatrix<C> {
    let i = C::new(0.0, 1.0);
    let mut out = (h * rho - rho * h) * (-i);
    for (l, k) in jumps {
        if *k == 0.0 {
            continue;
        }
        let ld = l.adjoint();
        let ll = &ld * l;
        let term = l * rho * &ld - (&ll * rho + rho * &ll) * C::new(0.5, 0.0);
        out += term * C::new(*k, 0.0);
    }
    out
}

/// Bloch-form `(M, b)` of a dense `D`-level Lindbladian in the generalized
/// Gell-Mann basis, matching the component scaling of [`crate::bloch`].
pub fn bloch_generator(h: &DMatrix<C>, jumps: &[(DMatrix<C>, f64)]) -> (DMatrix<f64>, Vec<f64>) {
    let d = h.nrows();
    let basis = GellMannBasis::new(d);
    let s = basis.scale();
    let images: Vec<DMatrix<C>> = basis.matrices().iter().map(|l| lindbladian(h, jumps, l)).collect();
    let n = basis.len();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (&basis.matrices()[i] * &images[j]).trace().re);
    let mixed = DMatrix::identity(d, d) / C::new(d as f64, 0.0);
    let l0 = lindbladian(h, jumps, &mixed);
    let b = basis.matrices().iter().map(|l| (l * &l0).trace().re / s).collect();
    (m, b)
}

/// Qubit shortcut of [`bloch_generator`].
pub fn qubit_superoperator(h: &Matrix2<C>, jumps: &[(Matrix2<C>, f64)]) -> (Matrix3<f64>, Vector3<f64>) {
    let to_d = |m: &Matrix2<C>| DMatrix::from_fn(2, 2, |i, j| m[(i, j)]);
    let dj: Vec<(DMatrix<C>, f64)> = jumps.iter().map(|(l, k)| (to_d(l), *k)).collect();
    let (m, b) = bloch_generator(&to_d(h), &dj);
    (Matrix3::from_fn(|i, j| m[(i, j)]), Vector3::new(b[0], b[1], b[2]))
}

#[derive(Debug, Clone)]
pub struct DenseEvolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Largest anti-Hermitian part removed by the per-step symmetrization.
    pub max_hermiticity_correction: f64,
    pub max_trace_drift: f64,
}

fn flatten(m: &DMatrix<C>, out: &mut [f64]) {
    for (k, z) in m.iter().enumerate() {
        out[2 * k] = z.re;
        out[2 * k + 1] = z.im;
    }
}

fn unflatten(d: usize, y: &[f64]) -> DMatrix<C> {
    DMatrix::from_iterator(d, d, (0..d * d).map(|k| C::new(y[2 * k], y[2 * k + 1])))
}

/// Integrates the matrix ODE and returns `ρ` at each time of `t_grid`
/// (the first entry is the initial time).
pub fn dense_evolve(
    sys: &DenseLindbladSystem,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    tol: Tolerances,
) -> Result<DenseEvolution, OracleError> {
    let d = sys.dim;
    if rho0.dim() != d {
        return Err(OracleError::Dimension { system: d, state: rho0.dim() });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(OracleError::BadGrid);
    }
    for &t in [t_grid[0], *t_grid.last().unwrap()].iter() {
        let deviation = hermitian_deviation(&sys.hamiltonian(t));
        if deviation > 1e-12 {
            return Err(OracleError::NotHermitian { t, deviation });
        }
    }
    let mut y0 = vec![0.0; 2 * d * d];
    flatten(rho0.matrix(), &mut y0);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let rho = unflatten(d, y);
        flatten(&sys.apply(t, &rho), dy);
    };
    let mut max_corr: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    let on_step = |_t: f64, y: &mut [f64]| {
        let rho = unflatten(d, y);
        let dev = hermitian_deviation(&rho);
        max_corr = max_corr.max(dev);
        max_drift = max_drift.max((rho.trace().re - 1.0).abs());
        if dev > 1e-13 {
            let sym = (&rho + rho.adjoint()) * C::new(0.5, 0.0);
            flatten(&sym, y);
            return Ok(true);
        }
        Ok(false)
    };
    let opts = OdeOptions::from(tol);
    let out = dopri5(rhs, t_grid[0], &y0, *t_grid.last().unwrap(), t_grid, &opts, on_step)?;
    if max_corr > 0.0 {
        log::debug!("dense_evolve: max hermiticity correction {max_corr:e}, trace drift {max_drift:e}");
    }
    let mut states = Vec::with_capacity(out.samples.len());
    for (t, y) in &out.samples {
        let m = unflatten(d, y);
        let m = (&m + m.adjoint()) * C::new(0.5, 0.0);
        let ev = hermitian_eigenvalues(&m)[0];
        if ev < -POSITIVITY_ERROR {
            return Err(OracleError::Positivity { t: *t, eigenvalue: ev });
        }
        max_drift = max_drift.max((m.trace().re - 1.0).abs());
        states.push(DensityMatrix::new_unchecked(m));
    }
    Ok(DenseEvolution {
        times: t_grid.to_vec(),
        states,
        max_hermiticity_correction: max_corr,
        max_trace_drift: max_drift,
    })
}

fn check_dim(dim: usize) -> Result<(), OracleError> {
    if dim == 0 || dim > 1 << MAX_SITES {
        return Err(OracleError::TooLarge(dim.max(1).ilog2() as usize + 1));
    }
    Ok(())
}

fn check_sites(n: usize) -> Result<(), OracleError> {
    if n == 0 || n > MAX_SITES {
        return Err(OracleError::TooLarge(n));
    }
    Ok(())
}

fn pauli(which: char) -> Matrix2<C> {
    let i = C::new(0.0, 1.0);
    match which {
        'x' => Matrix2::new(ZERO, ONE, ONE, ZERO),
        'y' => Matrix2::new(ZERO, -i, i, ZERO),
        'z' => Matrix2::new(ONE, ZERO, ZERO, -ONE),
        _ => Matrix2::identity(),
    }
}

/// `op` acting on site `site` of an `n`-site register (site 0 is the most
/// significant bit).
pub fn site_operator(n: usize, site: usize, op: &Matrix2<C>) -> DMatrix<C> {
    let mut out = DMatrix::from_element(1, 1, ONE);
    for s in 0..n {
        let m = if s == site { *op } else { Matrix2::identity() };
        out = out.kronecker(&m);
    }
    out
}

/// `(H_zz, H_x)` with `H(g) = H_zz + g H_x`.
pub fn ising_parts(n: usize) -> Result<(DMatrix<C>, DMatrix<C>), OracleError> {
    check_sites(n)?;
    let dim = 1 << n;
    let zs: Vec<DMatrix<C>> = (0..n).map(|s| site_operator(n, s, &pauli('z'))).collect();
    let mut hzz = DMatrix::zeros(dim, dim);
    let mut hx = DMatrix::zeros(dim, dim);
    for s in 0..n {
        hzz -= &zs[s] * &zs[(s + 1) % n];
        hx -= site_operator(n, s, &pauli('x'));
    }
    Ok((hzz, hx))
}

/// `−Σ (σᶻᵢσᶻᵢ₊₁ + g σˣᵢ)` on a ring.
pub fn ising_hamiltonian_dense(n: usize, g: f64) -> Result<DMatrix<C>, OracleError> {
    let (hzz, hx) = ising_parts(n)?;
    Ok(hzz + hx * C::new(g, 0.0))
}

/// `∏ σˣᵢ`.
pub fn parity_operator(n: usize) -> Result<DMatrix<C>, OracleError> {
    check_sites(n)?;
    let mut p = DMatrix::identity(1 << n, 1 << n);
    for s in 0..n {
        p *= site_operator(n, s, &pauli('x'));
    }
    Ok(p)
}

/// Jordan-Wigner annihilators `c₀ … c_{N−1}`.
pub fn fermion_operators(n: usize) -> Result<Vec<DMatrix<C>>, OracleError> {
    check_sites(n)?;
    // −|+⟩⟨−| in the computational basis.
    let a = Matrix2::new(C::new(-0.5, 0.0), C::new(0.5, 0.0), C::new(-0.5, 0.0), C::new(0.5, 0.0));
    let x = pauli('x');
    Ok((0..n)
        .map(|j| {
            let mut out = DMatrix::from_element(1, 1, ONE);
            for s in 0..n {
                let m = if s < j {
                    x
                } else if s == j {
                    a
                } else {
                    Matrix2::identity()
                };
                out = out.kronecker(&m);
            }
            out
        })
        .collect())
}

/// `H^{⊗N}`: maps `∏σˣ` to `∏σᶻ`, so parity sectors become sets of basis
/// states with even or odd popcount.
fn hadamard_all(n: usize) -> DMatrix<C> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let had = Matrix2::new(C::new(s, 0.0), C::new(s, 0.0), C::new(s, 0.0), C::new(-s, 0.0));
    let mut w = DMatrix::from_element(1, 1, ONE);
    for _ in 0..n {
        w = w.kronecker(&had);
    }
    w
}

fn sector_indices(n: usize, parity: Parity) -> Vec<usize> {
    let want = if parity == Parity::Even { 0 } else { 1 };
    (0..1usize << n).filter(|b| b.count_ones() % 2 == want).collect()
}

fn restrict(m: &DMatrix<C>, w: &DMatrix<C>, idx: &[usize]) -> DMatrix<C> {
    let r = w * m * w;
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| r[(idx[i], idx[j])])
}

fn embed(m: &DMatrix<C>, w: &DMatrix<C>, idx: &[usize], dim: usize) -> DMatrix<C> {
    let mut full = DMatrix::zeros(dim, dim);
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            full[(a, b)] = m[(i, j)];
        }
    }
    w * full * w
}

/// Lowest eigenvalues of `H(g)` restricted to the even (`∏σˣ = +1`) sector.
pub fn even_sector_spectrum(n: usize, g: f64) -> Result<Vec<f64>, OracleError> {
    let h = ising_hamiltonian_dense(n, g)?;
    let sub = restrict(&h, &hadamard_all(n), &sector_indices(n, Parity::Even));
    Ok(hermitian_eigenvalues(&sub))
}

/// Many-body energies `E₀ + Σ_{q∈S} ε_q` over even subsets `S` of the full
/// antiperiodic grid, with `E₀ = −Σ_{k>0} ε_k`.
pub fn free_fermion_even_spectrum(n: usize, g: f64) -> Result<Vec<f64>, OracleError> {
    let pos = momentum_grid(n)?;
    let eps: Vec<f64> = pos.iter().flat_map(|&k| [crate::ising::dispersion(g, k); 2]).collect();
    let e0: f64 = -pos.iter().map(|&k| crate::ising::dispersion(g, k)).sum::<f64>();
    let mut out: Vec<f64> = (0u32..1 << n)
        .filter(|s| s.count_ones() % 2 == 0)
        .map(|s| e0 + (0..n).filter(|b| s >> b & 1 == 1).map(|b| eps[b]).sum::<f64>())
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Ground state of `H(g)` and its parity, detected from `⟨∏σˣ⟩`.
pub fn ising_ground_state(n: usize, g: f64) -> Result<(DensityMatrix, Parity), OracleError> {
    let h = ising_hamiltonian_dense(n, g)?;
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let gap = eig.eigenvalues[order[1]] - eig.eigenvalues[order[0]];
    let psi: Vec<C> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    let rho = DensityMatrix::pure(&psi);
    let parity = rho.expect(&parity_operator(n)?).re;
    if gap < 1e-9 || (parity.abs() - 1.0).abs() > 1e-9 {
        return Err(OracleError::AmbiguousGroundState { gap, parity });
    }
    Ok((rho, if parity > 0.0 { Parity::Even } else { Parity::Odd }))
}

/// Dense Ising quench with `L = H(t)` from `g_start` through the
/// (decreasing) fields in `g_samples`.
#[derive(Debug, Clone)]
pub struct IsingOracleRun {
    pub n: usize,
    pub tau_q: f64,
    pub kappa: f64,
    pub parity: Parity,
    pub fields: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub max_trace_drift: f64,
    pub max_hermiticity_correction: f64,
}

pub fn ising_oracle_run(
    n: usize,
    tau_q: f64,
    kappa: f64,
    g_start: f64,
    g_samples: &[f64],
    tol: Tolerances,
) -> Result<IsingOracleRun, OracleError> {
    let (hzz, hx) = ising_parts(n)?;
    let (rho0, parity) = ising_ground_state(n, g_start)?;
    let mut times = vec![-g_start * tau_q];
    times.extend(g_samples.iter().map(|g| -g * tau_q));
    // H and L = H conserve ∏σˣ, so the evolution stays in the sector of the
    // initial ground state.
    let w = hadamard_all(n);
    let idx = sector_indices(n, parity);
    let (hzz, hx) = (restrict(&hzz, &w, &idx), restrict(&hx, &w, &idx));
    let rho_s = DensityMatrix::new_unchecked(restrict(rho0.matrix(), &w, &idx));
    let ham = move |t: f64| &hzz + &hx * C::new(-t / tau_q, 0.0);
    let sys = DenseLindbladSystem::energy_dephasing(idx.len(), ham, kappa)?;
    let ev = dense_evolve(&sys, &rho_s, &times, tol)?;
    let states = ev.states[1..]
        .iter()
        .map(|s| DensityMatrix::new_unchecked(embed(s.matrix(), &w, &idx, 1 << n)))
        .collect();
    Ok(IsingOracleRun {
        n,
        tau_q,
        kappa,
        parity,
        fields: g_samples.to_vec(),
        states,
        max_trace_drift: ev.max_trace_drift,
        max_hermiticity_correction: ev.max_hermiticity_correction,
    })
}

/// Mode Bloch vectors `(R_x, R_y, R_z)` on the positive grid, read off from
/// `n_k = ⟨c†ₖcₖ⟩ = (1 + R_z)/2` and `⟨c₋ₖcₖ⟩ = −(R_y + iR_x)/2`.
pub fn mode_bloch_vectors(rho: &DensityMatrix, n: usize) -> Result<Vec<[f64; 3]>, OracleError> {
    let cs = fermion_operators(n)?;
    let dim = 1 << n;
    let ck = |k: f64| {
        let mut m = DMatrix::zeros(dim, dim);
        for (j, c) in cs.iter().enumerate() {
            m += c * C::from_polar(1.0 / (n as f64).sqrt(), -k * j as f64);
        }
        m
    };
    momentum_grid(n)?
        .into_iter()
        .map(|k| {
            let (a, b) = (ck(k), ck(-k));
            let nk = rho.expect(&(a.adjoint() * &a)).re;
            let f = rho.expect(&(&b * &a));
            Ok([-2.0 * f.im, -2.0 * f.re, 2.0 * nk - 1.0])
        })
        .collect()
}

/// `(1/N) Σᵢ ⟨(1 − σᶻᵢσᶻᵢ₊₁)/2⟩`.
pub fn kink_density(rho: &DensityMatrix, n: usize) -> Result<f64, OracleError> {
    check_sites(n)?;
    let z = pauli('z');
    let mut s = 0.0;
    for i in 0..n {
        let zz = site_operator(n, i, &z) * site_operator(n, (i + 1) % n, &z);
        s += 0.5 * (1.0 - rho.expect(&zz).re);
    }
    Ok(s / n as f64)
}

/// `⟨σᶻᵢσᶻᵢ₊R⟩` averaged over `i`.
pub fn zz_correlation(rho: &DensityMatrix, n: usize, r: usize) -> Result<f64, OracleError> {
    check_sites(n)?;
    let z = pauli('z');
    let s: f64 = (0..n)
        .map(|i| rho.expect(&(site_operator(n, i, &z) * site_operator(n, (i + r) % n, &z))).re)
        .sum();
    Ok(s / n as f64)
}

/// `⟨σᶻᵢ⟩` for every site.
pub fn magnetization_z(rho: &DensityMatrix, n: usize) -> Result<Vec<f64>, OracleError> {
    check_sites(n)?;
    Ok((0..n).map(|i| rho.expect(&site_operator(n, i, &pauli('z'))).re).collect())
}

/// Key of a cached oracle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleKey {
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

impl OracleKey {
    fn stem(&self) -> String {
        let raw = format!(
            "oracle_N{}_tq{}_k{}_g{}_{}_r{:e}_a{:e}",
            self.n, self.tau_q, self.kappa, self.g_start, self.g_end, self.rtol, self.atol
        );
        raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { 'p' }).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheManifest {
    key: OracleKey,
    data: String,
    dim: usize,
    times: Vec<f64>,
    layout: String,
}

/// Density matrices on disk: a little-endian `f64` array (re, im, column
/// major, one matrix per time) next to a JSON manifest.
#[derive(Debug, Clone)]
pub struct OracleCache {
    dir: PathBuf,
}

impl OracleCache {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        Self { dir: dir.as_ref().to_path_buf() }
    }

    fn paths(&self, key: &OracleKey) -> (PathBuf, PathBuf) {
        let stem = key.stem();
        (self.dir.join(format!("{stem}.json")), self.dir.join(format!("{stem}.bin")))
    }

    pub fn store(&self, key: &OracleKey, times: &[f64], states: &[DensityMatrix]) -> Result<(), OracleError> {
        std::fs::create_dir_all(&self.dir)?;
        let (json, bin) = self.paths(key);
        let dim = states.first().map(|s| s.dim()).unwrap_or(0);
        let mut bytes = Vec::with_capacity(states.len() * dim * dim * 16);
        for s in states {
            for z in s.matrix().iter() {
                bytes.extend_from_slice(&z.re.to_le_bytes());
                bytes.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        std::fs::write(&bin, bytes)?;
        let manifest = CacheManifest {
            key: key.clone(),
            data: bin.file_name().unwrap().to_string_lossy().into_owned(),
            dim,
            times: times.to_vec(),
            layout: "f64 little-endian, (re, im) pairs, column-major, one matrix per time".into(),
        };
        std::fs::write(json, serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(&self, key: &OracleKey) -> Result<Option<(Vec<f64>, Vec<DensityMatrix>)>, OracleError> {
        let (json, bin) = self.paths(key);
        if !json.exists() || !bin.exists() {
            return Ok(None);
        }
        let manifest: CacheManifest = serde_json::from_slice(&std::fs::read(json)?)?;
        if manifest.key != *key {
            return Ok(None);
        }
        let bytes = std::fs::read(bin)?;
        let d = manifest.dim;
        let per = d * d * 16;
        if bytes.len() != per * manifest.times.len() {
            return Ok(None);
        }
        let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let states = vals
            .chunks_exact(2 * d * d)
            .map(|chunk| DensityMatrix::new_unchecked(unflatten(d, chunk)))
            .collect();
        Ok(Some((manifest.times, states)))
    }

    /// Cached Ising run, computed and stored on a miss. The run samples the
    /// single field `key.g_end`.
    pub fn ising_final_state(&self, key: &OracleKey) -> Result<DensityMatrix, OracleError> {
        if let Some((_, mut states)) = self.load(key)? {
            if let Some(s) = states.pop() {
                return Ok(s);
            }
        }
        let tol = Tolerances::new(key.rtol, key.atol)?;
        let run = ising_oracle_run(key.n, key.tau_q, key.kappa, key.g_start, &[key.g_end], tol)?;
        self.store(key, &[-key.g_end * key.tau_q], &run.states)?;
        Ok(run.states[0].clone())
    }
}
