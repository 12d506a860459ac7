//! Dense operator and superoperator arithmetic.
//!
//! Vectorization convention, used everywhere in the crate: column stacking,
//! `vec(X)[i + j*d] = X[i, j]`. Under it `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
//! nalgebra stores matrices column-major, so vectorizing is a copy of the
//! storage and devectorizing is a reshape.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance for the hermiticity invariant.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Largest entrywise deviation from hermiticity.
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Hilbert–Schmidt inner product `Tr(a† b)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0), -I, I, c(0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

/// Eigen-decomposition of a hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let d = m.nrows();
    // symmetrize so round-off never leaks an anti-hermitian part into the solver
    let sym = (m + m.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn vectorize(x: &CMatrix) -> Result<CVector> {
    if x.nrows() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: x.ncols(),
        });
    }
    Ok(CVector::from_column_slice(x.as_slice()))
}

pub fn devectorize(v: &CVector, d: usize) -> Result<CMatrix> {
    if v.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            got: v.len(),
        });
    }
    Ok(CMatrix::from_column_slice(d, d, v.as_slice()))
}

/// A hermitian operator on a `dim`-dimensional Hilbert space (ħ = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    m: CMatrix,
}

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let residual = hermiticity_residual(&m);
        if residual > HERMITIAN_TOL * max_abs(&m).max(1.0) {
            return Err(Error::NotHermitian { residual });
        }
        Ok(Self { m })
    }

    /// Hermitian part of an arbitrary square matrix.
    pub fn hermitian_part(m: &CMatrix) -> Self {
        Self {
            m: (m + m.adjoint()) * c(0.5),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: CMatrix::zeros(d, d) }
    }

    pub fn identity(d: usize) -> Self {
        Self { m: CMatrix::identity(d, d) }
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        let d = values.len();
        Self {
            m: CMatrix::from_fn(d, d, |i, j| if i == j { c(values[i]) } else { c(0.0) }),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    /// Eigenvalues (ascending) and the unitary of eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, CMatrix) {
        hermitian_eigen(&self.m)
    }

    /// `λ_max − λ_min`, which is also the norm of `X ↦ −i[H, X]`.
    pub fn spectral_spread(&self) -> f64 {
        let (e, _) = self.eigen();
        match (e.first(), e.last()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        }
    }

    pub fn kron(&self, other: &HermitianOperator) -> HermitianOperator {
        Self {
            m: self.m.kronecker(&other.m),
        }
    }
}

/// A density matrix: hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let herm = hermiticity_residual(&m);
        if herm > 1e-12 * max_abs(&m).max(1.0) {
            return Err(Error::InvalidDensity {
                reason: format!("not hermitian (residual {herm:.3e})"),
            });
        }
        let tr = m.trace();
        if (tr - c(1.0)).norm() > 1e-10 {
            return Err(Error::InvalidDensity {
                reason: format!("trace {tr} differs from 1"),
            });
        }
        let (e, _) = hermitian_eigen(&m);
        if let Some(&min) = e.first() {
            if min < -1e-10 {
                return Err(Error::InvalidDensity {
                    reason: format!("negative eigenvalue {min:.3e}"),
                });
            }
        }
        Ok(Self { m })
    }

    /// Gibbs state `e^{-βH} / Z`.
    pub fn gibbs(h: &HermitianOperator, beta: f64) -> Self {
        let (e, v) = h.eigen();
        let e0 = e.first().copied().unwrap_or(0.0);
        let w: Vec<f64> = e.iter().map(|x| (-beta * (x - e0)).exp()).collect();
        let z: f64 = w.iter().sum();
        let d = e.len();
        let diag = CMatrix::from_fn(d, d, |i, j| if i == j { c(w[i] / z) } else { c(0.0) });
        let m = &v * diag * v.adjoint();
        Self {
            m: (&m + m.adjoint()) * c(0.5),
        }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            m: CMatrix::identity(d, d) * c(1.0 / d as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }
}

/// A linear map on `d × d` operators, stored as its `d² × d²` matrix acting
/// on column-stacked operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    m: CMatrix,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, m: CMatrix) -> Result<Self> {
        let n = dim * dim;
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.nrows().max(m.ncols()),
            });
        }
        Ok(Self { dim, m })
    }

    /// Builds the matrix of a linear map by applying it to the matrix units.
    pub fn from_fn(dim: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let n = dim * dim;
        let mut m = CMatrix::zeros(n, n);
        let mut unit = CMatrix::zeros(dim, dim);
        for col in 0..n {
            let (i, j) = (col % dim, col / dim);
            unit[(i, j)] = c(1.0);
            let out = f(&unit);
            m.set_column(col, &CVector::from_column_slice(out.as_slice()));
            unit[(i, j)] = c(0.0);
        }
        Self { dim, m }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            m: CMatrix::identity(dim * dim, dim * dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            m: CMatrix::zeros(dim * dim, dim * dim),
        }
    }

    /// `X ↦ A X B`.
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        Self {
            dim: a.nrows(),
            m: b.transpose().kronecker(a),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        assert_eq!(x.nrows(), self.dim, "operator dimension mismatch");
        let v = CVector::from_column_slice(x.as_slice());
        let out = &self.m * v;
        CMatrix::from_column_slice(self.dim, self.dim, out.as_slice())
    }

    pub fn try_apply(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.dim || x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.nrows(),
            });
        }
        Ok(self.apply(x))
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        Self {
            dim: self.dim,
            m: &self.m * &other.m,
        }
    }

    /// Hilbert–Schmidt adjoint.
    pub fn adjoint(&self) -> Superoperator {
        Self {
            dim: self.dim,
            m: self.m.adjoint(),
        }
    }

    pub fn scale(&self, s: C64) -> Superoperator {
        Self {
            dim: self.dim,
            m: &self.m * s,
        }
    }

    /// Operator norm induced by the Hilbert–Schmidt norm (largest singular value).
    pub fn norm(&self) -> f64 {
        superop_norm(self)
    }

    pub fn exp(&self, t: f64) -> Superoperator {
        superop_exp(self, t)
    }

    /// Largest entrywise difference; for identities checked "within tol".
    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        max_abs(&(&self.m - &other.m))
    }
}

impl Add for &Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            m: &self.m + &rhs.m,
        }
    }
}

impl Sub for &Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        Superoperator {
            dim: self.dim,
            m: &self.m - &rhs.m,
        }
    }
}

impl Mul for &Superoperator {
    type Output = Superoperator;
    fn mul(self, rhs: &Superoperator) -> Superoperator {
        self.compose(rhs)
    }
}

impl Neg for &Superoperator {
    type Output = Superoperator;
    fn neg(self) -> Superoperator {
        self.scale(c(-1.0))
    }
}

/// `ρ ↦ −i[H, ρ]`.
pub fn commutator_superop(h: &HermitianOperator) -> Superoperator {
    let d = h.dim();
    let id = CMatrix::identity(d, d);
    let m = (id.kronecker(h.matrix()) - h.matrix().transpose().kronecker(&id)) * (-I);
    Superoperator { dim: d, m }
}

/// `ρ ↦ e^{−iH₀t} ρ e^{iH₀t}`.
pub fn unitary_propagator(h0: &HermitianOperator, t: f64) -> Superoperator {
    let u = unitary(h0, t);
    Superoperator {
        dim: h0.dim(),
        m: u.conjugate().kronecker(&u),
    }
}

/// `e^{−iHt}` via the eigen-decomposition of `H`.
pub fn unitary(h: &HermitianOperator, t: f64) -> CMatrix {
    let (e, v) = h.eigen();
    let d = e.len();
    let phases = CMatrix::from_fn(d, d, |i, j| {
        if i == j {
            C64::from_polar(1.0, -e[i] * t)
        } else {
            c(0.0)
        }
    });
    &v * phases * v.adjoint()
}

pub fn superop_norm(s: &Superoperator) -> f64 {
    s.m.singular_values().iter().fold(0.0_f64, |a, &b| a.max(b))
}

/// Matrix exponential `e^{S t}` (scaling and squaring with Padé approximants).
pub fn superop_exp(s: &Superoperator, t: f64) -> Superoperator {
    Superoperator {
        dim: s.dim,
        m: (&s.m * c(t)).exp(),
    }
}

/// Spectral data of `Z = −i[H₀, ·]`.
///
/// The eigen-operators of `Z` are `|m⟩⟨n|` built from eigenvectors of `H₀`,
/// with `Z |m⟩⟨n| = iω |m⟩⟨n|` for `ω = E_n − E_m`. They are indexed by
/// `p = m + n·d`, matching the column-stacking convention, so the change of
/// basis to eigen-operators is the unitary `W = V̄ ⊗ V`.
#[derive(Debug, Clone)]
pub struct BohrDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
    frequencies: Vec<f64>,
    labels: Vec<usize>,
    cluster_tol: f64,
}

impl BohrDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    /// Distinct clustered Bohr frequencies, ascending.
    pub fn bohr_frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn cluster_tol(&self) -> f64 {
        self.cluster_tol
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Cluster index of eigen-operator `p`.
    pub fn label(&self, p: usize) -> usize {
        self.labels[p]
    }

    /// Exact (unclustered) frequency of eigen-operator `p`.
    pub fn pair_frequency(&self, p: usize) -> f64 {
        let d = self.dim();
        let (m, n) = (p % d, p / d);
        self.eigenvalues[n] - self.eigenvalues[m]
    }

    pub fn pair_frequencies(&self) -> Vec<f64> {
        (0..self.dim() * self.dim()).map(|p| self.pair_frequency(p)).collect()
    }

    /// `W = V̄ ⊗ V`; its columns are the vectorized eigen-operators.
    pub fn eigen_basis(&self) -> CMatrix {
        self.eigenvectors.conjugate().kronecker(&self.eigenvectors)
    }

    /// Matrix of `S` in the eigen-operator basis, `W† S W`.
    pub fn to_eigen(&self, s: &Superoperator) -> CMatrix {
        let w = self.eigen_basis();
        w.adjoint() * s.matrix() * w
    }

    pub fn from_eigen(&self, m: &CMatrix) -> Superoperator {
        let w = self.eigen_basis();
        Superoperator {
            dim: self.dim(),
            m: &w * m * w.adjoint(),
        }
    }

    /// Spectral projector `Q_ω` for the `k`-th clustered frequency.
    pub fn projector(&self, k: usize) -> Superoperator {
        let n = self.dim() * self.dim();
        let mask = CMatrix::from_fn(n, n, |p, q| {
            if p == q && self.labels[p] == k {
                c(1.0)
            } else {
                c(0.0)
            }
        });
        self.from_eigen(&mask)
    }

    pub fn projectors(&self) -> Vec<Superoperator> {
        (0..self.frequencies.len()).map(|k| self.projector(k)).collect()
    }

    /// `Σ_ω iω Q_ω`, which reconstructs `Z`.
    pub fn reconstruct_liouvillian(&self) -> Superoperator {
        let n = self.dim() * self.dim();
        let diag = CMatrix::from_fn(n, n, |p, q| {
            if p == q {
                I * self.frequencies[self.labels[p]]
            } else {
                c(0.0)
            }
        });
        self.from_eigen(&diag)
    }
}

/// Default clustering tolerance: `1e-9 · max(1, spread of eigenvalues)`.
pub fn default_cluster_tol(h0: &HermitianOperator) -> f64 {
    1e-9 * h0.spectral_spread().max(1.0)
}

/// Spectral (Bohr) decomposition of `Z = −i[H₀, ·]`.
///
/// Differences are clustered with the absolute tolerance `cluster_tol`;
/// a cluster whose members spread more than `cluster_tol` is ambiguous and
/// reported as an error.
pub fn bohr_decompose(h0: &HermitianOperator, cluster_tol: f64) -> Result<BohrDecomposition> {
    if !(cluster_tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "cluster_tol",
            reason: format!("must be positive, got {cluster_tol}"),
        });
    }
    let (eigenvalues, eigenvectors) = h0.eigen();
    let d = eigenvalues.len();
    let n = d * d;
    let freq = |p: usize| eigenvalues[p / d] - eigenvalues[p % d];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| freq(a).total_cmp(&freq(b)));

    let mut labels = vec![0usize; n];
    let mut frequencies = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && freq(order[end]) - freq(order[end - 1]) <= cluster_tol {
            end += 1;
        }
        let lo = freq(order[start]);
        let hi = freq(order[end - 1]);
        let mean = order[start..end].iter().map(|&p| freq(p)).sum::<f64>() / (end - start) as f64;
        if hi - lo > cluster_tol {
            return Err(Error::ClusterAmbiguity {
                frequency: mean,
                spread: hi - lo,
                tol: cluster_tol,
            });
        }
        let k = frequencies.len();
        for &p in &order[start..end] {
            labels[p] = k;
        }
        frequencies.push(mean);
        start = end;
    }
    Ok(BohrDecomposition {
        eigenvalues,
        eigenvectors,
        frequencies,
        labels,
        cluster_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_hermitian, random_matrix, rng};

    #[test]
    fn vectorize_round_trip_and_identity() {
        let mut r = rng(1);
        let x = random_matrix(&mut r, 3);
        let v = vectorize(&x).unwrap();
        assert_eq!(devectorize(&v, 3).unwrap(), x);
        let id = vectorize(&CMatrix::identity(2, 2)).unwrap();
        assert_eq!(id.as_slice(), &[c(1.0), c(0.0), c(0.0), c(1.0)]);
    }

    #[test]
    fn vectorize_rejects_bad_shapes() {
        assert!(vectorize(&CMatrix::zeros(2, 3)).is_err());
        assert!(devectorize(&CVector::zeros(5), 2).is_err());
    }

    #[test]
    fn sandwich_law_matches_direct_product() {
        let mut r = rng(2);
        for _ in 0..5 {
            let a = random_matrix(&mut r, 2);
            let b = random_matrix(&mut r, 2);
            let x = random_matrix(&mut r, 2);
            let direct = &a * &x * &b;
            let via = Superoperator::sandwich(&a, &b).apply(&x);
            assert!(max_abs(&(direct - via)) < 1e-13);
        }
    }

    #[test]
    fn commutator_of_pauli_z_and_x() {
        let h = HermitianOperator::new(pauli_z()).unwrap();
        let out = commutator_superop(&h).apply(&pauli_x());
        assert!(max_abs(&(out - pauli_y() * c(2.0))) < 1e-14);
        let zero = commutator_superop(&HermitianOperator::zeros(3));
        assert_eq!(max_abs(zero.matrix()), 0.0);
    }

    #[test]
    fn commutator_output_is_traceless() {
        let mut r = rng(3);
        for k in 0..20 {
            let d = 2 + k % 4;
            let h = random_hermitian(&mut r, d);
            let rho = random_matrix(&mut r, d);
            let out = commutator_superop(&h).apply(&rho);
            assert!(out.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        assert!(matches!(HermitianOperator::new(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn unitary_propagator_group_law() {
        let mut r = rng(4);
        let h = random_hermitian(&mut r, 4);
        assert!(unitary_propagator(&h, 0.0).max_abs_diff(&Superoperator::identity(4)) < 1e-14);
        let prod = &unitary_propagator(&h, 1.7) * &unitary_propagator(&h, -1.7);
        assert!(prod.max_abs_diff(&Superoperator::identity(4)) < 1e-10);
        let ts = &unitary_propagator(&h, 0.4) * &unitary_propagator(&h, 0.9);
        assert!(ts.max_abs_diff(&unitary_propagator(&h, 1.3)) < 1e-10);
        assert!((unitary_propagator(&h, 2.3).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn qubit_rotation_by_pi() {
        let h = HermitianOperator::new(pauli_z() * c(0.5)).unwrap();
        let out = unitary_propagator(&h, std::f64::consts::PI).apply(&pauli_x());
        assert!(max_abs(&(out + pauli_x())) < 1e-12);
    }

    #[test]
    fn norm_examples() {
        assert!((Superoperator::identity(3).norm() - 1.0).abs() < 1e-12);
        let mut r = rng(5);
        let h = random_hermitian(&mut r, 3);
        let s = commutator_superop(&h);
        assert!((s.scale(c(2.0)).norm() - 2.0 * s.norm()).abs() < 1e-10);
        // the commutator norm is the eigenvalue spread
        assert!((s.norm() - h.spectral_spread()).abs() < 1e-10);
    }

    #[test]
    fn exp_agrees_with_unitary_path_and_semigroup() {
        let mut r = rng(6);
        let h = random_hermitian(&mut r, 4);
        let z = commutator_superop(&h);
        assert!(superop_exp(&z, 0.0).max_abs_diff(&Superoperator::identity(4)) < 1e-14);
        assert!(superop_exp(&z, 2.0).max_abs_diff(&unitary_propagator(&h, 2.0)) < 1e-9);
        let s = Superoperator::from_matrix(4, random_matrix(&mut r, 16)).unwrap();
        let lhs = superop_exp(&s, 0.7);
        let rhs = &superop_exp(&s, 0.3) * &superop_exp(&s, 0.4);
        assert!(lhs.max_abs_diff(&rhs) < 1e-9 * lhs.norm().max(1.0));
    }

    #[test]
    fn bohr_two_level() {
        let h = HermitianOperator::from_diagonal(&[0.0, 1.0]);
        let b = bohr_decompose(&h, 1e-9).unwrap();
        assert_eq!(b.bohr_frequencies(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn bohr_degenerate_identity() {
        let h = HermitianOperator::from_diagonal(&[2.5, 2.5, 2.5]);
        let b = bohr_decompose(&h, 1e-9).unwrap();
        assert_eq!(b.bohr_frequencies(), &[0.0]);
        assert!(b.projector(0).max_abs_diff(&Superoperator::identity(3)) < 1e-12);
    }

    #[test]
    fn bohr_three_level_enumeration() {
        let h = HermitianOperator::from_diagonal(&[0.0, 1.0, 3.0]);
        let b = bohr_decompose(&h, 1e-9).unwrap();
        assert_eq!(b.bohr_frequencies(), &[-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        let qs = b.projectors();
        assert_eq!(qs.len(), 7);
        let sum = qs.iter().fold(Superoperator::zeros(3), |acc, q| &acc + q);
        assert!(sum.max_abs_diff(&Superoperator::identity(3)) < 1e-12);
    }

    #[test]
    fn bohr_ambiguity_is_an_error() {
        // differences 1.0 and 1.0 + 1.5e-9 chain with 1.0 + 3e-9 when tol = 2e-9
        let h = HermitianOperator::from_diagonal(&[0.0, 1.0, 2.0 + 1.5e-9, 3.0 + 4.5e-9]);
        let err = bohr_decompose(&h, 2e-9).unwrap_err();
        assert!(matches!(err, Error::ClusterAmbiguity { .. }));
        assert!(bohr_decompose(&h, 0.0).is_err());
    }

    #[test]
    fn bohr_invariants_random() {
        let mut r = rng(7);
        for d in 2..=5 {
            let h = random_hermitian(&mut r, d);
            let b = bohr_decompose(&h, default_cluster_tol(&h)).unwrap();
            let qs = b.projectors();
            let sum = qs.iter().fold(Superoperator::zeros(d), |acc, q| &acc + q);
            assert!(sum.max_abs_diff(&Superoperator::identity(d)) < 1e-10);
            for (i, qi) in qs.iter().enumerate() {
                for (j, qj) in qs.iter().enumerate() {
                    let prod = qi * qj;
                    let expect = if i == j { qi.clone() } else { Superoperator::zeros(d) };
                    assert!(prod.max_abs_diff(&expect) < 1e-10);
                }
            }
            let z = commutator_superop(&h);
            assert!((&z - &b.reconstruct_liouvillian()).norm() < 1e-10);
            let t = 0.37 * d as f64;
            let u = unitary_propagator(&h, t);
            for (k, q) in qs.iter().enumerate() {
                let phase = C64::from_polar(1.0, b.bohr_frequencies()[k] * t);
                assert!((&(&u * q) - &q.scale(phase)).norm() < 1e-9);
            }
        }
    }
}
