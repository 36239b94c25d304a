//! Density matrices, generalized Bloch vectors and the trace distance.
//!
//! The Gell-Mann matrices are normalized as `Tr[λi λj] = 2 δij` and ordered
//! symmetric pairs first, then antisymmetric pairs, then the diagonal ones.
//! For `D = 2` this gives `(σx, σy, σz)`.
//!
//! Components are `r_i = Tr[λi ρ] / s_D` with `s_D = sqrt(2(D-1)/D)`, so that
//! pure states sit on the unit sphere for every `D` and `s_2 = 1` recovers the
//! usual Pauli expectation values.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues of a density matrix may dip this far below zero.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Slack on `|R| <= 1` accepted by [`from_bloch`].
pub const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlochError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Bloch vector of length {len} does not correspond to any dimension D (need D^2-1)")]
    InvalidLength { len: usize },
    #[error("non-physical Bloch vector: |R| = {norm} exceeds 1")]
    NonPhysical { norm: f64 },
    #[error("state is not positive: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositive { min_eigenvalue: f64 },
    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("trace is {trace}, expected 1")]
    BadTrace { trace: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
}

/// Generalized Gell-Mann basis of `D x D` traceless Hermitian matrices.
#[derive(Debug, Clone)]
pub struct GellMannBasis {
    dim: usize,
    matrices: Vec<DMatrix<Complex64>>,
}

impl GellMannBasis {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "Gell-Mann basis needs D >= 2");
        let mut matrices = Vec::with_capacity(dim * dim - 1);
        for j in 0..dim {
            for k in (j + 1)..dim {
                let mut m = DMatrix::zeros(dim, dim);
                m[(j, k)] = ONE;
                m[(k, j)] = ONE;
                matrices.push(m);
            }
        }
        for j in 0..dim {
            for k in (j + 1)..dim {
                let mut m = DMatrix::zeros(dim, dim);
                m[(j, k)] = -I;
                m[(k, j)] = I;
                matrices.push(m);
            }
        }
        for l in 1..dim {
            let c = (2.0 / (l * (l + 1)) as f64).sqrt();
            let mut m = DMatrix::zeros(dim, dim);
            for j in 0..l {
                m[(j, j)] = Complex64::new(c, 0.0);
            }
            m[(l, l)] = Complex64::new(-c * l as f64, 0.0);
            matrices.push(m);
        }
        Self { dim, matrices }
    }

    /// Pauli matrices `(σx, σy, σz)`.
    pub fn qubit() -> Self {
        Self::new(2)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[DMatrix<Complex64>] {
        &self.matrices
    }

    /// Scale between `Tr[λi ρ]` and the unit-ball component `r_i`.
    pub fn scale(&self) -> f64 {
        let d = self.dim as f64;
        (2.0 * (d - 1.0) / d).sqrt()
    }
}

/// Real `(D^2 - 1)`-component Bloch vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BlochVector {
    components: Vec<f64>,
    dim: usize,
}

impl BlochVector {
    pub fn new(components: Vec<f64>) -> Result<Self, BlochError> {
        let len = components.len();
        let dim = dim_from_len(len).ok_or(BlochError::InvalidLength { len })?;
        Ok(Self { components, dim })
    }

    pub fn qubit(x: f64, y: f64, z: f64) -> Self {
        Self { components: vec![x, y, z], dim: 2 }
    }

    pub fn from_vector3(r: &Vector3<f64>) -> Self {
        Self::qubit(r[0], r[1], r[2])
    }

    /// Qubit components as a fixed-size vector.
    pub fn to_vector3(&self) -> Result<Vector3<f64>, BlochError> {
        if self.dim != 2 {
            return Err(BlochError::DimensionMismatch { expected: 2, found: self.dim });
        }
        Ok(Vector3::new(self.components[0], self.components[1], self.components[2]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for BlochVector {
    type Error = BlochError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<BlochVector> for Vec<f64> {
    fn from(b: BlochVector) -> Self {
        b.components
    }
}

fn dim_from_len(len: usize) -> Option<usize> {
    let d = ((len + 1) as f64).sqrt().round() as usize;
    (d >= 2 && d * d == len + 1).then_some(d)
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates hermiticity, trace and positivity.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self, BlochError> {
        if m.nrows() != m.ncols() {
            return Err(BlochError::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        let deviation = hermitian_deviation(&m);
        if deviation > HERMITIAN_TOL {
            return Err(BlochError::NotHermitian { deviation });
        }
        let trace = m.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(BlochError::BadTrace { trace });
        }
        let rho = Self { m: symmetrize(&m) };
        let min_eigenvalue = rho.eigenvalues()[0];
        if min_eigenvalue < -POSITIVITY_TOL {
            return Err(BlochError::NotPositive { min_eigenvalue });
        }
        Ok(rho)
    }

    /// Wraps a matrix without any check. Callers own the invariants.
    pub fn new_unchecked(m: DMatrix<Complex64>) -> Self {
        Self { m }
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) state vector.
    pub fn pure(psi: &[Complex64]) -> Self {
        let n2: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        let d = psi.len();
        let m = DMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / n2);
        Self { m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) / Complex64::new(dim as f64, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.m
    }

    pub fn trace(&self) -> Complex64 {
        self.m.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.m)
    }

    /// Expectation value `Tr[ρ O]`.
    pub fn expect(&self, op: &DMatrix<Complex64>) -> Complex64 {
        (&self.m * op).trace()
    }

    /// Clamps negative eigenvalues to zero and renormalizes the trace.
    pub fn repair(&self) -> Self {
        let eig = symmetrize(&self.m).symmetric_eigen();
        let vals: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = vals.iter().sum();
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (k, &w) in vals.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            m += &v * v.adjoint() * Complex64::new(w / total, 0.0);
        }
        Self { m }
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.m.nrows())
            .map(|i| (0..self.m.ncols()).map(|j| [self.m[(i, j)].re, self.m[(i, j)].im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("density matrix must be square"));
        }
        let m = DMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
        DensityMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub(crate) fn symmetrize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut vals: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub fn to_bloch(rho: &DensityMatrix, basis: &GellMannBasis) -> Result<BlochVector, BlochError> {
    if rho.dim() != basis.dim() {
        return Err(BlochError::DimensionMismatch { expected: basis.dim(), found: rho.dim() });
    }
    let s = basis.scale();
    let components = basis.matrices().iter().map(|l| rho.expect(l).re / s).collect();
    Ok(BlochVector { components, dim: basis.dim() })
}

/// Inverse of [`to_bloch`]. No clamping is done: an out-of-ball or
/// non-positive `R` is an error.
pub fn from_bloch(r: &BlochVector, basis: &GellMannBasis) -> Result<DensityMatrix, BlochError> {
    if r.dim() != basis.dim() {
        return Err(BlochError::DimensionMismatch { expected: basis.dim(), found: r.dim() });
    }
    let norm = r.norm();
    if norm > 1.0 + NORM_TOL {
        return Err(BlochError::NonPhysical { norm });
    }
    let d = basis.dim();
    let half_s = 0.5 * basis.scale();
    let mut m = DMatrix::identity(d, d) / Complex64::new(d as f64, 0.0);
    for (l, &c) in basis.matrices().iter().zip(r.components()) {
        m += l * Complex64::new(half_s * c, 0.0);
    }
    let rho = DensityMatrix { m };
    if d > 2 {
        let min_eigenvalue = rho.eigenvalues()[0];
        if min_eigenvalue < -POSITIVITY_TOL {
            return Err(BlochError::NotPositive { min_eigenvalue });
        }
    }
    Ok(rho)
}

/// Qubit state `(I + R·σ)/2` without any validation.
pub fn qubit_density(r: &Vector3<f64>) -> DMatrix<Complex64> {
    let h = 0.5;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(h * (1.0 + r[2]), 0.0),
            Complex64::new(h * r[0], -h * r[1]),
            Complex64::new(h * r[0], h * r[1]),
            Complex64::new(h * (1.0 - r[2]), 0.0),
        ],
    )
}

/// Pauli components `Tr[σ ρ]` of any 2x2 matrix (real parts).
pub fn qubit_components(m: &DMatrix<Complex64>) -> Vector3<f64> {
    Vector3::new(
        (m[(0, 1)] + m[(1, 0)]).re,
        (I * (m[(0, 1)] - m[(1, 0)])).re,
        (m[(0, 0)] - m[(1, 1)]).re,
    )
}

/// `½ Σ|λi|` over the eigenvalues of `a - b`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64, BlochError> {
    if a.dim() != b.dim() {
        return Err(BlochError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let diff = &a.m - &b.m;
    let d: f64 = hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum();
    Ok((0.5 * d).clamp(0.0, 1.0))
}

/// Qubit shortcut `|Ra - Rb| / 2`.
pub fn qubit_trace_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    0.5 * (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const ZERO: Complex64 = Complex64::new(0.0, 0.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn qubit_basis_is_pauli() {
        let b = GellMannBasis::qubit();
        let m = b.matrices();
        assert_eq!(m[0], DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]));
        assert_eq!(m[1], DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]));
        assert_eq!(m[2], DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]));
        assert_eq!(b.scale(), 1.0);
    }

    #[test]
    fn orthogonality_up_to_four() {
        for d in 2..=4 {
            let b = GellMannBasis::new(d);
            assert_eq!(b.len(), d * d - 1);
            for (i, li) in b.matrices().iter().enumerate() {
                assert!(li.trace().norm() < 1e-15);
                assert!(hermitian_deviation(li) < 1e-15);
                for (j, lj) in b.matrices().iter().enumerate() {
                    let t = (li * lj).trace();
                    let want = if i == j { 2.0 } else { 0.0 };
                    assert_abs_diff_eq!(t.re, want, epsilon = 1e-14);
                    assert_abs_diff_eq!(t.im, 0.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn simple_states() {
        let b = GellMannBasis::qubit();
        let up = DensityMatrix::new(DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO])).unwrap();
        assert_eq!(to_bloch(&up, &b).unwrap().components(), &[0.0, 0.0, 1.0]);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert_eq!(to_bloch(&mixed, &b).unwrap().components(), &[0.0, 0.0, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityMatrix::pure(&[c(s, 0.0), c(s, 0.0)]);
        let r = to_bloch(&plus, &b).unwrap();
        assert_abs_diff_eq!(r.components()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.components()[2], 0.0, epsilon = 1e-15);

        let down = from_bloch(&BlochVector::qubit(0.0, 0.0, -1.0), &b).unwrap();
        assert_eq!(down.matrix()[(1, 1)], ONE);
        assert_eq!(down.matrix()[(0, 0)], ZERO);
    }

    #[test]
    fn qubit_eigenvalues_from_length() {
        let b = GellMannBasis::qubit();
        let r = BlochVector::qubit(0.3, -0.2, 0.7f64.powi(2) - 0.13).components().to_vec();
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r: Vec<f64> = r.iter().map(|x| 0.7 * x / n).collect();
        let rho = from_bloch(&BlochVector::new(r).unwrap(), &b).unwrap();
        let ev = rho.eigenvalues();
        assert_abs_diff_eq!(ev[0], 0.15, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], 0.85, epsilon = 1e-14);
    }

    #[test]
    fn rejects_long_vectors() {
        let b = GellMannBasis::qubit();
        let err = from_bloch(&BlochVector::qubit(1.0, 0.1, 0.0), &b).unwrap_err();
        assert!(matches!(err, BlochError::NonPhysical { .. }));
        let b3 = GellMannBasis::new(3);
        assert!(from_bloch(&BlochVector::qubit(0.0, 0.0, 0.0), &b3).is_err());
    }

    #[test]
    fn qutrit_positivity_is_checked() {
        let b = GellMannBasis::new(3);
        // +λ8 at unit length gives diag(2, 2, −1)/3: outside the state space
        // although |R| = 1. The opposite direction is the pure state |2⟩.
        let mut r = vec![0.0; 8];
        r[7] = 1.0;
        let err = from_bloch(&BlochVector::new(r).unwrap(), &b).unwrap_err();
        assert!(matches!(err, BlochError::NotPositive { .. }));
        let mut r = vec![0.0; 8];
        r[7] = -1.0;
        assert!(from_bloch(&BlochVector::new(r).unwrap(), &b).is_ok());
    }

    #[test]
    fn pure_qutrit_is_unit_length() {
        let b = GellMannBasis::new(3);
        let rho = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.48), c(0.64, 0.0)]);
        let r = to_bloch(&rho, &b).unwrap();
        assert_abs_diff_eq!(r.norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn distance_examples() {
        let b = GellMannBasis::qubit();
        let a = from_bloch(&BlochVector::qubit(1.0, 0.0, 0.0), &b).unwrap();
        let m = from_bloch(&BlochVector::qubit(0.0, 0.0, 0.5), &b).unwrap();
        let d = trace_distance(&a, &m).unwrap();
        assert_abs_diff_eq!(d, 0.5 * 1.25f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(d, 0.5590, epsilon = 1e-4);
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
        let up = from_bloch(&BlochVector::qubit(0.0, 0.0, 1.0), &b).unwrap();
        let dn = from_bloch(&BlochVector::qubit(0.0, 0.0, -1.0), &b).unwrap();
        assert_abs_diff_eq!(trace_distance(&up, &dn).unwrap(), 1.0, epsilon = 1e-15);
        assert!(trace_distance(&up, &DensityMatrix::maximally_mixed(3)).is_err());
    }

    #[test]
    fn repair_clamps() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.01, 0.0), ZERO, ZERO, c(-0.01, 0.0)]);
        assert!(DensityMatrix::new(m.clone()).is_err());
        let fixed = DensityMatrix::new_unchecked(m).repair();
        let ev = fixed.eigenvalues();
        assert_abs_diff_eq!(ev[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ev[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn json_shapes() {
        let r = BlochVector::qubit(0.0, 0.5, 0.0);
        assert_eq!(serde_json::to_string(&r).unwrap(), "[0.0,0.5,0.0]");
        let back: BlochVector = serde_json::from_str("[0.0,0.5,0.0]").unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<BlochVector>("[1.0,2.0]").is_err());

        let rho = from_bloch(&r, &GellMannBasis::qubit()).unwrap();
        let s = serde_json::to_string(&rho).unwrap();
        assert_eq!(s, "[[[0.5,0.0],[0.0,-0.25]],[[0.0,0.25],[0.5,0.0]]]");
        let back: DensityMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn qubit_helpers_agree() {
        let r = Vector3::new(0.1, -0.4, 0.3);
        let m = qubit_density(&r);
        let rho = from_bloch(&BlochVector::from_vector3(&r), &GellMannBasis::qubit()).unwrap();
        assert!((&m - rho.matrix()).norm() < 1e-15);
        assert!((qubit_components(&m) - r).norm() < 1e-15);
    }
}
