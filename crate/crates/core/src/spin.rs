//! Dense complex linear algebra on the four-spin space `|n1 e1 n2 e2>`.
//!
//! Basis index = `8·b(n1) + 4·b(e1) + 2·b(n2) + b(e2)`, where bit 0 is spin
//! up (σ^z = +1, the nuclear `|0>`) and bit 1 is spin down (σ^z = −1).

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use nalgebra::{Matrix4, SMatrix, SVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Hilbert-space dimension of two nuclei plus two electrons.
pub const DIM: usize = 16;

pub type Mat16 = SMatrix<C64, DIM, DIM>;
pub type Vec16 = SVector<C64, DIM>;
pub type Mat4 = Matrix4<C64>;

/// Asymmetry above which the eigensolver rejects its input.
pub const HERMITIAN_REJECT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    N1,
    E1,
    N2,
    E2,
}

impl Site {
    pub const ALL: [Site; 4] = [Site::N1, Site::E1, Site::N2, Site::E2];
    pub const NUCLEI: [Site; 2] = [Site::N1, Site::N2];
    pub const ELECTRONS: [Site; 2] = [Site::E1, Site::E2];

    /// Tensor slot, 0..3 in the order n1, e1, n2, e2.
    pub fn slot(self) -> usize {
        match self {
            Site::N1 => 0,
            Site::E1 => 1,
            Site::N2 => 2,
            Site::E2 => 3,
        }
    }

    pub fn from_slot(slot: usize) -> Option<Site> {
        Site::ALL.get(slot).copied()
    }

    pub fn is_electron(self) -> bool {
        matches!(self, Site::E1 | Site::E2)
    }

    fn shift(self) -> usize {
        3 - self.slot()
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Site::N1 => "n1",
            Site::E1 => "e1",
            Site::N2 => "n2",
            Site::E2 => "e2",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn pauli(self) -> [[C64; 2]; 2] {
        let o = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Axis::X => [[o, one], [one, o]],
            Axis::Y => [[o, -i], [i, o]],
            Axis::Z => [[one, o], [o, -one]],
        }
    }
}

/// Spin bit of `site` in basis state `index` (0 = up, 1 = down).
#[inline]
pub fn spin_bit(index: usize, site: Site) -> usize {
    (index >> site.shift()) & 1
}

/// σ^z eigenvalue of `site` in basis state `index`.
#[inline]
pub fn sigma_z(index: usize, site: Site) -> f64 {
    if spin_bit(index, site) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Total σ^z (sum over all four spins) of a basis state.
pub fn magnetization(index: usize) -> i32 {
    Site::ALL.iter().map(|&s| sigma_z(index, s) as i32).sum()
}

/// Basis index from spin bits, in slot order n1, e1, n2, e2.
pub fn basis_index(n1: usize, e1: usize, n2: usize, e2: usize) -> usize {
    debug_assert!(n1 < 2 && e1 < 2 && n2 < 2 && e2 < 2);
    8 * n1 + 4 * e1 + 2 * n2 + e2
}

/// Index into the 4×4 nuclear register, `2·b(n1) + b(n2)`.
pub fn nuclear_index(index: usize) -> usize {
    2 * spin_bit(index, Site::N1) + spin_bit(index, Site::N2)
}

/// Index into the 4×4 electron register, `2·b(e1) + b(e2)`.
pub fn electron_index(index: usize) -> usize {
    2 * spin_bit(index, Site::E1) + spin_bit(index, Site::E2)
}

/// Full basis index from nuclear and electron register indices.
pub fn combine_index(nuclear: usize, electron: usize) -> usize {
    basis_index(nuclear >> 1, electron >> 1, nuclear & 1, electron & 1)
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat16) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `max |M − M†|`.
pub fn hermiticity_defect(m: &Mat16) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..DIM {
        for j in i..DIM {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// A 16×16 operator on the four-spin space. Every builder in this crate
/// produces a Hermitian one.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(Mat16);

impl Operator {
    pub fn from_matrix(m: Mat16) -> Self {
        Operator(m)
    }

    pub fn zero() -> Self {
        Operator(Mat16::zeros())
    }

    pub fn identity() -> Self {
        Operator(Mat16::identity())
    }

    pub fn from_diagonal(diag: &[f64; DIM]) -> Self {
        let mut m = Mat16::zeros();
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        Operator(m)
    }

    pub fn matrix(&self) -> &Mat16 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat16 {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.0)
    }

    /// Real diagonal entries.
    pub fn diagonal(&self) -> [f64; DIM] {
        std::array::from_fn(|i| self.0[(i, i)].re)
    }

    pub fn scaled(&self, s: f64) -> Operator {
        Operator(self.0 * C64::new(s, 0.0))
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, s: f64, other: &Operator) {
        let s = C64::new(s, 0.0);
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += s * b;
        }
    }

    pub fn expectation(&self, psi: &Vec16) -> f64 {
        (psi.adjoint() * self.0 * psi)[(0, 0)].re
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator(self.0 - rhs.0)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += rhs.0;
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scaled(rhs)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(self.0 * rhs.0)
    }
}

/// Density matrix on the four-spin space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Mat16);

impl DensityMatrix {
    pub fn from_matrix(m: Mat16) -> Self {
        DensityMatrix(m)
    }

    /// Projector onto a single basis state.
    pub fn basis(index: usize) -> Self {
        let mut m = Mat16::zeros();
        m[(index, index)] = C64::new(1.0, 0.0);
        DensityMatrix(m)
    }

    /// `|ψ><ψ|` for a normalised `ψ`.
    pub fn pure(psi: &Vec16) -> Self {
        DensityMatrix(psi * psi.adjoint())
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat16::identity() / C64::new(DIM as f64, 0.0))
    }

    pub fn matrix(&self) -> &Mat16 {
        &self.0
    }

    pub fn matrix_mut(&mut self) -> &mut Mat16 {
        &mut self.0
    }

    pub fn into_matrix(self) -> Mat16 {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        // tr(ρρ) = Σ_ij ρ_ij ρ_ji
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..DIM {
            for j in 0..DIM {
                acc += self.0[(i, j)] * self.0[(j, i)];
            }
        }
        acc.re
    }

    pub fn population(&self, index: usize) -> f64 {
        self.0[(index, index)].re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.0)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(sym);
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Divides by the trace; returns the drift `|tr ρ − 1|` that was removed.
    pub fn renormalize(&mut self) -> f64 {
        let tr = self.0.trace();
        let drift = (tr - C64::new(1.0, 0.0)).norm();
        self.0 /= C64::new(tr.re, 0.0);
        drift
    }

    /// Checks trace, Hermiticity and positivity against the given tolerances.
    pub fn check(&self, trace_tol: f64, herm_tol: f64, eig_floor: f64) -> Result<()> {
        let tr = (self.trace() - C64::new(1.0, 0.0)).norm();
        if tr > trace_tol {
            return Err(Error::InvalidState(format!("trace drift {tr:.3e}")));
        }
        let h = self.hermiticity_defect();
        if h > herm_tol {
            return Err(Error::InvalidState(format!("Hermiticity defect {h:.3e}")));
        }
        let e = self.min_eigenvalue();
        if e < eig_floor {
            return Err(Error::InvalidState(format!("negative eigenvalue {e:.3e}")));
        }
        Ok(())
    }
}

/// `σ^axis` on `site`, identity on the other three slots.
pub fn embed_pauli(axis: Axis, site: Site) -> Operator {
    let p = axis.pauli();
    let mut m = Mat16::zeros();
    let others = !(1usize << site.shift()) & 0xF;
    for i in 0..DIM {
        for j in 0..DIM {
            if i & others != j & others {
                continue;
            }
            m[(i, j)] = p[spin_bit(i, site)][spin_bit(j, site)];
        }
    }
    Operator(m)
}

/// `σ⃗_a · σ⃗_b`.
pub fn dot_coupling(a: Site, b: Site) -> Result<Operator> {
    if a == b {
        return Err(Error::InvalidArgument(format!(
            "dot coupling needs two distinct sites, got {a} twice"
        )));
    }
    let mut m = Mat16::zeros();
    for axis in Axis::ALL {
        m += embed_pauli(axis, a).0 * embed_pauli(axis, b).0;
    }
    Ok(Operator(m))
}

/// `AB − BA`.
pub fn commutator(a: &Mat16, b: &Mat16) -> Mat16 {
    a * b - b * a
}

/// `[S, [S, ρ]]`; the caller applies the rate.
pub fn double_commutator(site_op: &Operator, rho: &DensityMatrix) -> Mat16 {
    let inner = commutator(&site_op.0, &rho.0);
    commutator(&site_op.0, &inner)
}

/// Traces out both electrons, leaving the nuclear register
/// `|n1 n2>` indexed `2·b(n1) + b(n2)`.
pub fn partial_trace_electrons(rho: &DensityMatrix) -> Mat4 {
    let mut out = Mat4::zeros();
    for a in 0..4 {
        for b in 0..4 {
            let mut acc = C64::new(0.0, 0.0);
            for e in 0..4 {
                acc += rho.0[(combine_index(a, e), combine_index(b, e))];
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// Traces out both nuclei, leaving the electron register.
pub fn partial_trace_nuclei(rho: &DensityMatrix) -> Mat4 {
    let mut out = Mat4::zeros();
    for a in 0..4 {
        for b in 0..4 {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..4 {
                acc += rho.0[(combine_index(n, a), combine_index(n, b))];
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: [f64; DIM],
    pub vectors: Mat16,
}

impl Eigensystem {
    pub fn vector(&self, k: usize) -> Vec16 {
        self.vectors.column(k).into_owned()
    }

    /// `V diag(f(E)) V†`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> Mat16 {
        let mut scaled = self.vectors;
        for (k, &e) in self.values.iter().enumerate() {
            let w = f(e);
            for r in 0..DIM {
                scaled[(r, k)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Hermitian eigendecomposition. Input asymmetry above
/// `1e-8 · max(1, max|H|)` is rejected, anything smaller is symmetrised.
pub fn hermitian_eigensystem(h: &Operator) -> Result<Eigensystem> {
    let scale = max_abs(&h.0).max(1.0);
    let defect = h.hermiticity_defect();
    if defect > HERMITIAN_REJECT_TOL * scale {
        return Err(Error::NonHermitian { defect });
    }
    let sym = (h.0 + h.0.adjoint()) * C64::new(0.5, 0.0);
    Ok(eigensystem_unchecked(sym))
}

pub(crate) fn eigensystem_unchecked(sym: Mat16) -> Eigensystem {
    let eig = SymmetricEigen::new(sym);
    let mut order: [usize; DIM] = std::array::from_fn(|i| i);
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = std::array::from_fn(|k| eig.eigenvalues[order[k]]);
    let mut vectors = Mat16::zeros();
    for (k, &src) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(src));
    }
    Eigensystem { values, vectors }
}

/// `exp(−i H dt / ħ)` through the eigendecomposition of `H`.
pub fn propagate_expm(h: &Operator, dt: f64, hbar: f64) -> Result<Mat16> {
    if dt < 0.0 {
        return Err(Error::InvalidArgument(format!("negative time step {dt}")));
    }
    if dt == 0.0 {
        return Ok(Mat16::identity());
    }
    let eig = hermitian_eigensystem(h)?;
    Ok(eig.map(|e| C64::from_polar(1.0, -e * dt / hbar)))
}

/// Builds a 16-component state from nuclear and electron register amplitudes.
pub fn product_state(nuclear: &[C64; 4], electron: &[C64; 4]) -> Vec16 {
    let mut v = Vec16::zeros();
    for (n, &a) in nuclear.iter().enumerate() {
        for (e, &b) in electron.iter().enumerate() {
            v[combine_index(n, e)] = a * b;
        }
    }
    v
}
