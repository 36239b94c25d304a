//! Kink correlator `C_R = ⟨σᶻᵢ σᶻᵢ₊R⟩` of the mode ensemble.
//!
//! With `Aᵢ = c†ᵢ + cᵢ` and `Bᵢ = c†ᵢ − cᵢ`, `σᶻᵢσᶻᵢ₊₁ = BᵢAᵢ₊₁`, so `C_R`
//! is the expectation of the string `B₀A₁B₁A₂⋯B_{R−1}A_R`. Wick's theorem
//! turns it into the Pfaffian of the antisymmetric contraction matrix `W`
//! and `|C_R| = sqrt|det W|`.
//!
//! Pair correlators from the mode Bloch vectors (`r = i − j`, sums over the
//! positive momenta):
//!
//! ```text
//! ⟨BᵢAⱼ⟩ = (2/N) Σ [R_z cos kr + R_x sin kr]
//! ⟨AᵢAⱼ⟩ =  δᵢⱼ + (2i/N) Σ R_y sin kr
//! ⟨BᵢBⱼ⟩ = −δᵢⱼ + (2i/N) Σ R_y sin kr
//! ⟨AᵢBⱼ⟩ = −⟨BⱼAᵢ⟩
//! ```
//!
//! In the paramagnet every mode sits at `R = (0, 0, −1)` and `⟨BᵢAᵢ⟩ = −1`.
//! Wick's theorem is exact for Gaussian states, i.e. for the closed chain.
//! Dephased modes are mixtures of Gaussian states and the determinant is then
//! an approximation beyond `R = 1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ising::ModeEnsemble;

type C = Complex64;

/// Minima must lie below this fraction of the neighbouring maxima.
pub const MINIMUM_PROMINENCE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelateError {
    #[error("separation {r} exceeds the table range {r_max}")]
    OutOfRange { r: usize, r_max: usize },
    #[error("R must be at least 1")]
    ZeroDistance,
    #[error("found {found} qualifying minima, need at least two; increase R_max")]
    TooFewMinima { found: usize },
}

/// Translation-invariant pair correlators for `r ∈ [−r_max, r_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorTable {
    pub r_max: usize,
    pub ba: Vec<f64>,
    pub aa: Vec<C>,
    pub bb: Vec<C>,
}

impl CorrelatorTable {
    fn idx(&self, r: i64) -> usize {
        (r + self.r_max as i64) as usize
    }

    fn check(&self, r: i64) -> Result<(), CorrelateError> {
        if r.unsigned_abs() as usize > self.r_max {
            return Err(CorrelateError::OutOfRange { r: r.unsigned_abs() as usize, r_max: self.r_max });
        }
        Ok(())
    }

    /// `⟨BᵢAⱼ⟩` at `r = i − j`.
    pub fn ba(&self, r: i64) -> Result<f64, CorrelateError> {
        self.check(r)?;
        Ok(self.ba[self.idx(r)])
    }

    pub fn aa(&self, r: i64) -> Result<C, CorrelateError> {
        self.check(r)?;
        Ok(self.aa[self.idx(r)])
    }

    pub fn bb(&self, r: i64) -> Result<C, CorrelateError> {
        self.check(r)?;
        Ok(self.bb[self.idx(r)])
    }

    /// `⟨AᵢBⱼ⟩ = −⟨BⱼAᵢ⟩`.
    pub fn ab(&self, r: i64) -> Result<f64, CorrelateError> {
        Ok(-self.ba(-r)?)
    }
}

pub fn pair_correlators(ens: &ModeEnsemble, r_max: usize) -> CorrelatorTable {
    let scale = 2.0 / ens.n_sites as f64;
    let rows: Vec<(f64, C, C)> = (-(r_max as i64)..=r_max as i64)
        .into_par_iter()
        .map(|r| {
            let mut ba = 0.0;
            let mut s = 0.0;
            for (k, b) in ens.momenta.iter().zip(&ens.bloch) {
                let (sn, cs) = (k * r as f64).sin_cos();
                ba += b[2] * cs + b[0] * sn;
                s += b[1] * sn;
            }
            let delta = if r == 0 { 1.0 } else { 0.0 };
            (scale * ba, C::new(delta, scale * s), C::new(-delta, scale * s))
        })
        .collect();
    CorrelatorTable {
        r_max,
        ba: rows.iter().map(|r| r.0).collect(),
        aa: rows.iter().map(|r| r.1).collect(),
        bb: rows.iter().map(|r| r.2).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    A(i64),
    B(i64),
}

fn contraction(t: &CorrelatorTable, x: Op, y: Op) -> Result<C, CorrelateError> {
    Ok(match (x, y) {
        (Op::B(i), Op::A(j)) => C::new(t.ba(i - j)?, 0.0),
        (Op::A(i), Op::B(j)) => C::new(t.ab(i - j)?, 0.0),
        (Op::A(i), Op::A(j)) => t.aa(i - j)?,
        (Op::B(i), Op::B(j)) => t.bb(i - j)?,
    })
}

/// Antisymmetric `2R × 2R` Wick matrix over `B₀, A₁, B₁, A₂, …, B_{R−1}, A_R`.
pub fn wick_matrix(t: &CorrelatorTable, r: usize) -> Result<DMatrix<C>, CorrelateError> {
    if r == 0 {
        return Err(CorrelateError::ZeroDistance);
    }
    let ops: Vec<Op> = (0..r as i64).flat_map(|m| [Op::B(m), Op::A(m + 1)]).collect();
    let n = ops.len();
    let mut w = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let c = contraction(t, ops[a], ops[b])?;
            w[(a, b)] = c;
            w[(b, a)] = -c;
        }
    }
    Ok(w)
}

/// `ln|det m|` and the phase of `det m` by LU with partial pivoting.
/// Returns `(−inf, 0)` for an exactly singular matrix.
pub fn log_det(m: &DMatrix<C>) -> (f64, C) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "log_det needs a square matrix");
    let mut a = m.clone();
    let mut log_abs = 0.0;
    let mut phase = C::new(1.0, 0.0);
    for col in 0..n {
        let (piv, best) = (col..n).map(|r| (r, a[(r, col)].norm())).fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == 0.0 {
            return (f64::NEG_INFINITY, C::new(0.0, 0.0));
        }
        if piv != col {
            a.swap_rows(piv, col);
            phase = -phase;
        }
        let p = a[(col, col)];
        log_abs += p.norm().ln();
        phase *= p / p.norm();
        for r in (col + 1)..n {
            let f = a[(r, col)] / p;
            if f.norm() == 0.0 {
                continue;
            }
            for c in (col + 1)..n {
                let v = a[(col, c)];
                a[(r, c)] -= f * v;
            }
        }
    }
    (log_abs, phase)
}

/// `|C_R| = sqrt|det W|`.
pub fn corr_zz(t: &CorrelatorTable, r: usize) -> Result<f64, CorrelateError> {
    let w = wick_matrix(t, r)?;
    let (log_abs, _) = log_det(&w);
    Ok((0.5 * log_abs).exp().min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfile {
    /// `|C_R|` for `R = 1..=R_max`.
    pub values: Vec<f64>,
    /// Distances `R` of the qualifying minima.
    pub minima: Vec<usize>,
    pub xi: Option<f64>,
}

pub fn correlation_profile(t: &CorrelatorTable, r_max: usize) -> Result<CorrelationProfile, CorrelateError> {
    let values: Vec<f64> = (1..=r_max).into_par_iter().map(|r| corr_zz(t, r)).collect::<Result<_, _>>()?;
    let minima = find_minima(&values);
    let xi = mean_spacing(&minima).ok();
    Ok(CorrelationProfile { values, minima, xi })
}

/// Local minima of `values` (index `i` ↔ `R = i + 1`) lying below
/// [`MINIMUM_PROMINENCE`] times the smaller of the maxima on either side.
pub fn find_minima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let candidates: Vec<usize> =
        (1..n - 1).filter(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1]).collect();
    let mut out = Vec::new();
    for (c, &i) in candidates.iter().enumerate() {
        let lo = if c == 0 { 0 } else { candidates[c - 1] };
        let hi = candidates.get(c + 1).copied().unwrap_or(n - 1);
        let left = values[lo..=i].iter().copied().fold(0.0, f64::max);
        let right = values[i..=hi].iter().copied().fold(0.0, f64::max);
        if values[i] <= MINIMUM_PROMINENCE * left.min(right) {
            out.push(i + 1);
        }
    }
    out
}

fn mean_spacing(minima: &[usize]) -> Result<f64, CorrelateError> {
    if minima.len() < 2 {
        return Err(CorrelateError::TooFewMinima { found: minima.len() });
    }
    Ok((minima[minima.len() - 1] - minima[0]) as f64 / (minima.len() - 1) as f64)
}

/// Mean spacing between consecutive qualifying minima of `|C_R|`, where
/// `values[i]` is `|C_{i+1}|`.
pub fn extract_xi(values: &[f64]) -> Result<f64, CorrelateError> {
    mean_spacing(&find_minima(values))
}
