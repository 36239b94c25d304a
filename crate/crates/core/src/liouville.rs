//! Bloch-form Liouvillian `∂t R = M R + b` of a driven, damped qubit.
//!
//! The dissipator convention is
//! `D[ρ] = κ (L ρ L† − ½{L†L, ρ})`. In this convention a Hermitian jump
//! `L = n·σ` contributes `M_L = 2κ (n nᵀ − |n|² 1)` and the Hamiltonian
//! `H = ε σz + g σx` contributes `M_H = 2 [[0,−ε,0],[ε,0,−g],[0,g,0]]`.

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::{qubit_density, DensityMatrix};

/// Relative threshold below which a singular value counts as zero.
pub const NULL_TOL: f64 = 1e-10;
/// Relative threshold below which `|Re μ|` counts as zero.
pub const ZERO_RE_TOL: f64 = 1e-10;
/// Absolute tolerance of the hermiticity and commutator predicates.
pub const CLASSIFY_TOL: f64 = 1e-12;
const EIG_GROUP_TOL: f64 = 1e-8;

type C = Complex64;
const I: C = C::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiouvilleError {
    #[error("negative decay rate κ = {0}")]
    NegativeRate(f64),
    #[error(
        "M is not diagonalizable near μ = {eigenvalue}: exceptional point \
         (geometric multiplicity {geometric} < algebraic {algebraic})"
    )]
    Defective { eigenvalue: C, algebraic: usize, geometric: usize },
    #[error("L†L is singular (det = {det:e}); no inverse steady state")]
    SingularJump { det: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("ρ_L is not stationary: |M r + b| = {residual:e}")]
    NotStationary { residual: f64 },
}

/// `H = [[ε, g], [g, −ε]] = ε σz + g σx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitHamiltonian {
    pub epsilon: f64,
    pub g: f64,
}

impl QubitHamiltonian {
    pub fn new(epsilon: f64, g: f64) -> Self {
        Self { epsilon, g }
    }

    /// Field vector `h` with `H = h·σ`.
    pub fn field(&self) -> Vector3<f64> {
        Vector3::new(self.g, 0.0, self.epsilon)
    }

    pub fn matrix(&self) -> Matrix2<C> {
        Matrix2::new(
            C::new(self.epsilon, 0.0),
            C::new(self.g, 0.0),
            C::new(self.g, 0.0),
            C::new(-self.epsilon, 0.0),
        )
    }
}

/// `L = L1·1 + Lx σx + Ly σy + Lz σz` with rate `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpChannel {
    pub l1: C,
    pub lx: C,
    pub ly: C,
    pub lz: C,
    pub kappa: f64,
}

impl JumpChannel {
    pub fn new(l1: C, lx: C, ly: C, lz: C, kappa: f64) -> Result<Self, LiouvilleError> {
        if !(kappa >= 0.0) {
            return Err(LiouvilleError::NegativeRate(kappa));
        }
        Ok(Self { l1, lx, ly, lz, kappa })
    }

    /// Hermitian jump `n·σ` with real `n`.
    pub fn hermitian(n: Vector3<f64>, kappa: f64) -> Result<Self, LiouvilleError> {
        let z = C::new(0.0, 0.0);
        Self::new(z, C::new(n[0], 0.0), C::new(n[1], 0.0), C::new(n[2], 0.0), kappa)
    }

    /// The jump equal to the Hamiltonian itself (energy dephasing).
    pub fn from_hamiltonian(h: &QubitHamiltonian, kappa: f64) -> Result<Self, LiouvilleError> {
        Self::hermitian(h.field(), kappa)
    }

    /// `Lx = ½, Ly = i/2`, i.e. `L = |0⟩⟨1|`, which relaxes to `R = (0, 0, +1)`.
    pub fn sigma_minus(kappa: f64) -> Result<Self, LiouvilleError> {
        let z = C::new(0.0, 0.0);
        Self::new(z, C::new(0.5, 0.0), C::new(0.0, 0.5), z, kappa)
    }

    pub fn from_matrix(m: &Matrix2<C>, kappa: f64) -> Result<Self, LiouvilleError> {
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        Self::new((a + d) * 0.5, (b + c) * 0.5, I * (b - c) * 0.5, (a - d) * 0.5, kappa)
    }

    pub fn matrix(&self) -> Matrix2<C> {
        Matrix2::new(
            self.l1 + self.lz,
            self.lx - I * self.ly,
            self.lx + I * self.ly,
            self.l1 - self.lz,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelClass {
    I,
    II,
    III,
    IV,
    Mixed,
    ClosedSystem,
}

impl std::fmt::Display for ChannelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
            Self::IV => "IV",
            Self::Mixed => "Mixed",
            Self::ClosedSystem => "ClosedSystem",
        };
        f.write_str(s)
    }
}

/// `∂t R = M R + b` with bookkeeping. `kappa` is the summed rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiouvillianSystem {
    #[serde(rename = "M", with = "mat3_rows")]
    pub m: Matrix3<f64>,
    #[serde(with = "vec3")]
    pub b: Vector3<f64>,
    #[serde(rename = "class")]
    pub channel_class: ChannelClass,
    pub kappa: f64,
}

impl LiouvillianSystem {
    pub fn new(m: Matrix3<f64>, b: Vector3<f64>, channel_class: ChannelClass, kappa: f64) -> Self {
        Self { m, b, channel_class, kappa }
    }

    pub fn rhs(&self, r: &Vector3<f64>) -> Vector3<f64> {
        self.m * r + self.b
    }
}

mod mat3_rows {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

mod vec3 {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v[0], v[1], v[2]].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::new(a[0], a[1], a[2]))
    }
}

pub fn hamiltonian_part(h: &QubitHamiltonian) -> Matrix3<f64> {
    let (e, g) = (h.epsilon, h.g);
    Matrix3::new(0.0, -e, 0.0, e, 0.0, -g, 0.0, g, 0.0) * 2.0
}

/// `(M_L, b_L)` of one channel.
pub fn dissipator_part(ch: &JumpChannel) -> (Matrix3<f64>, Vector3<f64>) {
    let (l1, lx, ly, lz) = (ch.l1, ch.lx, ch.ly, ch.lz);
    let (x2, y2, z2) = (lx.norm_sqr(), ly.norm_sqr(), lz.norm_sqr());
    let a = [
        [C::new(-(y2 + z2), 0.0), lx * ly.conj() + I * l1 * lz.conj(), lz.conj() * lx - I * l1 * ly.conj()],
        [lx.conj() * ly - I * l1 * lz.conj(), C::new(-(x2 + z2), 0.0), ly * lz.conj() + I * l1 * lx.conj()],
        [lz * lx.conj() + I * l1 * ly.conj(), ly.conj() * lz - I * l1 * lx.conj(), C::new(-(x2 + y2), 0.0)],
    ];
    let k = ch.kappa;
    let m = Matrix3::from_fn(|i, j| 2.0 * k * a[i][j].re);
    let w = [ly.conj() * lz, lz.conj() * lx, lx.conj() * ly];
    let b = Vector3::new(4.0 * k * w[0].im, 4.0 * k * w[1].im, 4.0 * k * w[2].im);
    (m, b)
}

pub fn assemble(h: &QubitHamiltonian, channels: &[JumpChannel]) -> LiouvillianSystem {
    let mut m = hamiltonian_part(h);
    let mut b = Vector3::zeros();
    for ch in channels {
        let (ml, bl) = dissipator_part(ch);
        m += ml;
        b += bl;
    }
    let kappa = channels.iter().map(|c| c.kappa).sum();
    LiouvillianSystem { m, b, channel_class: classify_all(h, channels), kappa }
}

fn is_hermitian(l: &Matrix2<C>) -> bool {
    (l - l.adjoint()).iter().all(|z| z.norm() <= CLASSIFY_TOL)
}

fn commutes(a: &Matrix2<C>, b: &Matrix2<C>) -> bool {
    (a * b - b * a).iter().all(|z| z.norm() <= CLASSIFY_TOL)
}

pub fn classify(h: &QubitHamiltonian, ch: &JumpChannel) -> ChannelClass {
    let l = ch.matrix();
    match (is_hermitian(&l), commutes(&l, &h.matrix())) {
        (true, true) => ChannelClass::I,
        (true, false) => ChannelClass::II,
        (false, true) => ChannelClass::III,
        (false, false) => ChannelClass::IV,
    }
}

/// Class of a channel list; disagreeing channels give `Mixed`.
pub fn classify_all(h: &QubitHamiltonian, channels: &[JumpChannel]) -> ChannelClass {
    let active: Vec<_> = channels.iter().filter(|c| c.kappa > 0.0).collect();
    let Some(first) = active.first() else {
        return ChannelClass::ClosedSystem;
    };
    let c0 = classify(h, first);
    if active.iter().all(|c| classify(h, c) == c0) {
        c0
    } else {
        ChannelClass::Mixed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiouvillianSpectrum {
    pub eigenvalues: [C; 3],
    /// Unit-norm right eigenvectors.
    pub right: [Vector3<C>; 3],
    /// Left eigenvectors as row coefficients, `left[j]·right[i] = δij`.
    pub left: [Vector3<C>; 3],
    pub gap: f64,
    /// False when no eigenvalue has a nonzero real part.
    pub gap_defined: bool,
}

impl LiouvillianSpectrum {
    /// `left[j]ᵀ v` (no conjugation; the biorthogonal pairing).
    pub fn project(&self, j: usize, v: &Vector3<C>) -> C {
        self.left[j].iter().zip(v.iter()).map(|(a, b)| a * b).sum()
    }
}

fn to_complex(m: &Matrix3<f64>) -> Matrix3<C> {
    m.map(|x| C::new(x, 0.0))
}

/// Sort by descending real part; near-equal real parts by ascending `|Im|`,
/// then positive imaginary part first.
fn order_eigenvalues(mut ev: Vec<C>, tol: f64) -> Vec<C> {
    ev.sort_by(|a, b| b.re.total_cmp(&a.re));
    let before = |a: &C, b: &C| {
        if (a.re - b.re).abs() > tol {
            return a.re > b.re;
        }
        if (a.im.abs() - b.im.abs()).abs() > tol {
            return a.im.abs() < b.im.abs();
        }
        a.im > b.im
    };
    for i in 1..ev.len() {
        let mut j = i;
        while j > 0 && before(&ev[j], &ev[j - 1]) {
            ev.swap(j, j - 1);
            j -= 1;
        }
    }
    ev
}

fn fix_phase(v: Vector3<C>) -> Vector3<C> {
    let (mut best, mut idx) = (0.0, 0);
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best + 1e-12 {
            best = z.norm();
            idx = i;
        }
    }
    if best == 0.0 {
        return v;
    }
    let phase = v[idx].conj() / best;
    v * phase
}

/// Orthonormal basis of the (numerical) null space of a complex 3x3 matrix.
fn complex_null_space(a: &Matrix3<C>, rel_tol: f64, scale: f64) -> Vec<Vector3<C>> {
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let thresh = rel_tol * scale;
    (0..3)
        .filter(|&i| svd.singular_values[i] <= thresh)
        .map(|i| vt.row(i).adjoint().into_owned())
        .collect()
}

/// Eigenvalues of a real 3x3 matrix. nalgebra's uncapped Schur iteration
/// never terminates on the zero matrix, so it is capped and that case is
/// handled up front.
fn eigenvalues3(m: &Matrix3<f64>) -> Result<Vec<C>, LiouvilleError> {
    let scale = m.amax();
    if scale == 0.0 {
        return Ok(vec![C::new(0.0, 0.0); 3]);
    }
    let schur = (m / scale).try_schur(f64::EPSILON, 10_000).ok_or(LiouvilleError::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().map(|z| z * scale).collect())
}

pub fn spectrum(sys: &LiouvillianSystem) -> Result<LiouvillianSpectrum, LiouvilleError> {
    let m = &sys.m;
    let scale = m.norm();
    let tol = ZERO_RE_TOL * scale;
    let raw = eigenvalues3(m)?;
    let ev = order_eigenvalues(raw, EIG_GROUP_TOL * scale.max(f64::MIN_POSITIVE));
    let mc = to_complex(m);

    let mut right: Vec<Vector3<C>> = Vec::with_capacity(3);
    let mut vals: Vec<C> = Vec::with_capacity(3);
    let mut i = 0;
    while i < 3 {
        let mut j = i + 1;
        while j < 3 && (ev[j] - ev[i]).norm() <= EIG_GROUP_TOL * scale.max(1e-300) {
            j += 1;
        }
        let mult = j - i;
        let mu: C = ev[i..j].iter().sum::<C>() / mult as f64;
        let shifted = mc - Matrix3::identity() * mu;
        let ns = complex_null_space(&shifted, EIG_GROUP_TOL, scale.max(1e-300));
        if ns.len() < mult {
            return Err(LiouvilleError::Defective { eigenvalue: mu, algebraic: mult, geometric: ns.len() });
        }
        for (k, v) in ns.into_iter().take(mult).enumerate() {
            right.push(if mult == 1 { fix_phase(v) } else { v });
            vals.push(ev[i + k]);
        }
        i = j;
    }
    let rmat = Matrix3::from_columns(&[right[0], right[1], right[2]]);
    let Some(inv) = rmat.try_inverse() else {
        return Err(LiouvilleError::Defective { eigenvalue: vals[0], algebraic: 3, geometric: 2 });
    };
    let sv = rmat.singular_values();
    if sv.min() < 1e-8 * sv.max() {
        return Err(LiouvilleError::Defective { eigenvalue: vals[0], algebraic: 2, geometric: 1 });
    }
    let left = [0, 1, 2].map(|r| inv.row(r).transpose().into_owned());
    let decaying: Vec<f64> = vals.iter().filter(|z| z.re.abs() >= tol && tol > 0.0).map(|z| -z.re).collect();
    let gap_defined = !decaying.is_empty();
    let gap = decaying.into_iter().fold(f64::INFINITY, f64::min);
    Ok(LiouvillianSpectrum {
        eigenvalues: [vals[0], vals[1], vals[2]],
        right: [right[0], right[1], right[2]],
        left,
        gap: if gap_defined { gap.max(0.0) } else { 0.0 },
        gap_defined,
    })
}

/// Steady-state set `{R : M R + b = 0}` restricted to the Bloch ball.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStates {
    /// Minimum-norm solution.
    pub particular: Vector3<f64>,
    /// Orthonormal basis of `ker M`.
    pub null_basis: Vec<Vector3<f64>>,
    /// Radius of the physical disc/ball around `particular` inside the null
    /// space, `None` when `|particular| > 1`.
    pub physical_radius: Option<f64>,
    /// `|M particular + b|`.
    pub residual: f64,
}

impl SteadyStates {
    pub fn unique(&self) -> Option<Vector3<f64>> {
        self.null_basis.is_empty().then_some(self.particular)
    }

    pub fn dimension(&self) -> usize {
        self.null_basis.len()
    }

    /// Whether `r` lies in the steady set and in the Bloch ball.
    pub fn contains(&self, r: &Vector3<f64>, tol: f64) -> bool {
        let mut d = r - self.particular;
        for n in &self.null_basis {
            d -= *n * n.dot(&d);
        }
        d.norm() <= tol && r.norm() <= 1.0 + tol
    }
}

pub fn steady_states(sys: &LiouvillianSystem) -> SteadyStates {
    let svd = sys.m.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let thresh = NULL_TOL * smax;
    let mut particular = Vector3::zeros();
    let mut null_basis = Vec::new();
    for i in 0..3 {
        let s = svd.singular_values[i];
        let v = vt.row(i).transpose();
        if s <= thresh {
            let v = if v.iter().fold(0.0f64, |a, &x| if x.abs() > a.abs() { x } else { a }) < 0.0 { -v } else { v };
            null_basis.push(v);
        } else {
            particular -= v * (u.column(i).dot(&sys.b) / s);
        }
    }
    null_basis.sort_by(|a, b| {
        let ka = a.iamax();
        let kb = b.iamax();
        ka.cmp(&kb)
    });
    let residual = (sys.m * particular + sys.b).norm();
    let n2 = particular.norm_squared();
    let physical_radius = (n2 <= 1.0 + 1e-12).then(|| (1.0 - n2).max(0.0).sqrt());
    SteadyStates { particular, null_basis, physical_radius, residual }
}

/// `ρ_L = (L†L)⁻¹ / Tr[(L†L)⁻¹]`. For Class I and III channels stationarity
/// under the assembled Liouvillian is verified.
pub fn inverse_steady_state(h: &QubitHamiltonian, ch: &JumpChannel) -> Result<DensityMatrix, LiouvilleError> {
    let l = ch.matrix();
    let ll = l.adjoint() * l;
    let det = ll.determinant();
    let scale = ll.norm().max(f64::MIN_POSITIVE);
    if det.norm() <= 1e-12 * scale * scale {
        return Err(LiouvilleError::SingularJump { det: det.norm() });
    }
    let r = ll.try_inverse().ok_or(LiouvilleError::SingularJump { det: det.norm() })?;
    let rho = r / r.trace();
    let rho = (rho + rho.adjoint()) * C::new(0.5, 0.0);
    if matches!(classify(h, ch), ChannelClass::I | ChannelClass::III) {
        let sys = assemble(h, std::slice::from_ref(ch));
        let dm = DMatrix::from_fn(2, 2, |i, j| rho[(i, j)]);
        let rv = crate::bloch::qubit_components(&dm);
        let residual = sys.rhs(&rv).norm();
        if residual > 1e-10 {
            return Err(LiouvilleError::NotStationary { residual });
        }
    }
    Ok(DensityMatrix::new_unchecked(DMatrix::from_fn(2, 2, |i, j| rho[(i, j)])))
}

/// Qubit state for a Bloch vector, convenience re-export for callers that work
/// with `Vector3`.
pub fn bloch_to_density(r: &Vector3<f64>) -> DensityMatrix {
    DensityMatrix::new_unchecked(qubit_density(r))
}
