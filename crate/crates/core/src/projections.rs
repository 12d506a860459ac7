//! Projection superoperators `P₀` in Kraus form.
//!
//! Every projection is a Kraus map `ρ ↦ Σ_α V_α ρ V_α†` whose dual
//! `X ↦ Σ_α V_α† X V_α` is unital. Besides the Kraus list each built-in kind
//! keeps its structural data, so `apply`/`apply_dual` run in `O(d³)` without
//! materializing the (possibly thousands of) Kraus operators. The `d² × d²`
//! matrix of `P₀` is cached only for `d ≤ MATRIX_CACHE_DIM`.

use std::fmt;

use crate::error::{Error, Result};
use crate::opcore::{
    c, commutator, hermitian_eigen, max_abs, CMatrix, DensityMatrix, HermitianOperator,
    Superoperator, C64,
};
use crate::positivity;
use crate::random;

/// Largest Hilbert dimension for which `P₀` is stored as a dense superoperator.
pub const MATRIX_CACHE_DIM: usize = 16;

/// Default tolerance for algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjectionKind {
    PartialTrace,
    Diagonal,
    BlockDiagonal,
    Entangling,
    Custom,
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProjectionKind::PartialTrace => "partial_trace",
            ProjectionKind::Diagonal => "diagonal",
            ProjectionKind::BlockDiagonal => "block_diagonal",
            ProjectionKind::Entangling => "entangling",
            ProjectionKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Bath operators `{C_n, D_n}` defining an entangling projection.
///
/// Hypotheses checked at construction, with `A_n = C_n†C_n`, `B_n = D_n†D_n`:
/// `D_n†D_m = δ_{nm} B_n`, `Σ_n A_n = 1`, `A_n A_m = δ_{nm} A_n` and
/// `Tr(A_n B_m) = δ_{nm}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglingFamily {
    c_ops: Vec<CMatrix>,
    d_ops: Vec<CMatrix>,
    a_ops: Vec<CMatrix>,
    b_ops: Vec<CMatrix>,
}

impl EntanglingFamily {
    pub fn new(c_ops: Vec<CMatrix>, d_ops: Vec<CMatrix>) -> Result<Self> {
        Self::with_tol(c_ops, d_ops, ALGEBRAIC_TOL)
    }

    pub fn with_tol(c_ops: Vec<CMatrix>, d_ops: Vec<CMatrix>, tol: f64) -> Result<Self> {
        if c_ops.is_empty() || c_ops.len() != d_ops.len() {
            return Err(Error::InvalidParameter {
                name: "family",
                reason: format!(
                    "need equally many C_n and D_n (got {} and {})",
                    c_ops.len(),
                    d_ops.len()
                ),
            });
        }
        let db = c_ops[0].nrows();
        for m in c_ops.iter().chain(d_ops.iter()) {
            if m.nrows() != db || m.ncols() != db {
                return Err(Error::DimensionMismatch {
                    expected: db,
                    got: m.nrows().max(m.ncols()),
                });
            }
        }
        let a_ops: Vec<CMatrix> = c_ops.iter().map(|c| c.adjoint() * c).collect();
        let b_ops: Vec<CMatrix> = d_ops.iter().map(|d| d.adjoint() * d).collect();
        let family = Self {
            c_ops,
            d_ops,
            a_ops,
            b_ops,
        };
        family.validate(tol)?;
        Ok(family)
    }

    fn validate(&self, tol: f64) -> Result<()> {
        let n = self.len();
        let db = self.bath_dim();
        for i in 0..n {
            for j in 0..n {
                let lhs = self.d_ops[i].adjoint() * &self.d_ops[j];
                let residual = if i == j {
                    max_abs(&(lhs - &self.b_ops[i]))
                } else {
                    max_abs(&lhs)
                };
                if residual > tol {
                    return Err(Error::FamilyInvalid {
                        condition: "D_n†D_n' = δ B_n",
                        n: i,
                        m: j,
                        residual,
                    });
                }
            }
        }
        let sum = self
            .a_ops
            .iter()
            .fold(CMatrix::zeros(db, db), |acc, a| acc + a);
        let residual = max_abs(&(sum - CMatrix::identity(db, db)));
        if residual > tol {
            return Err(Error::FamilyInvalid {
                condition: "Σ A_n = 1",
                n: 0,
                m: 0,
                residual,
            });
        }
        for i in 0..n {
            for j in 0..n {
                let prod = &self.a_ops[i] * &self.a_ops[j];
                let residual = if i == j {
                    max_abs(&(prod - &self.a_ops[i]))
                } else {
                    max_abs(&prod)
                };
                if residual > tol {
                    return Err(Error::FamilyInvalid {
                        condition: "A_n A_n' = δ A_n",
                        n: i,
                        m: j,
                        residual,
                    });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let tr = (&self.a_ops[i] * &self.b_ops[j]).trace();
                let expect = if i == j { 1.0 } else { 0.0 };
                let residual = (tr - c(expect)).norm();
                if residual > tol {
                    return Err(Error::FamilyInvalid {
                        condition: "Tr(A_n B_n') = δ",
                        n: i,
                        m: j,
                        residual,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.c_ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_ops.is_empty()
    }

    pub fn bath_dim(&self) -> usize {
        self.c_ops[0].nrows()
    }

    pub fn c_ops(&self) -> &[CMatrix] {
        &self.c_ops
    }

    pub fn d_ops(&self) -> &[CMatrix] {
        &self.d_ops
    }

    pub fn a_ops(&self) -> &[CMatrix] {
        &self.a_ops
    }

    pub fn b_ops(&self) -> &[CMatrix] {
        &self.b_ops
    }
}

#[derive(Debug, Clone)]
enum Structure {
    PartialTrace {
        dim_a: usize,
        dim_b: usize,
        sigma: CMatrix,
    },
    Diagonal {
        basis: CMatrix,
    },
    BlockDiagonal {
        blocks: Vec<Vec<usize>>,
    },
    Entangling {
        dim_a: usize,
        family: EntanglingFamily,
    },
    Custom {
        kraus: Vec<CMatrix>,
    },
}

/// A completely positive projection `P₀` with unital dual.
#[derive(Debug, Clone)]
pub struct KrausProjection {
    dim: usize,
    structure: Structure,
    matrix: Option<Superoperator>,
}

impl KrausProjection {
    fn finish(dim: usize, structure: Structure) -> Result<Self> {
        let mut p = Self {
            dim,
            structure,
            matrix: None,
        };
        if dim <= MATRIX_CACHE_DIM {
            let from_kraus = kraus_superoperator(dim, &p.kraus_ops());
            let structural = Superoperator::from_fn(dim, |x| p.apply(x));
            let residual = from_kraus.max_abs_diff(&structural);
            if residual > 1e-12 * from_kraus.norm().max(1.0) {
                return Err(Error::GateFailure {
                    check: "kraus/structural consistency",
                    residual,
                    tol: 1e-12,
                });
            }
            p.matrix = Some(from_kraus);
        }
        Ok(p)
    }

    pub fn kind(&self) -> ProjectionKind {
        match self.structure {
            Structure::PartialTrace { .. } => ProjectionKind::PartialTrace,
            Structure::Diagonal { .. } => ProjectionKind::Diagonal,
            Structure::BlockDiagonal { .. } => ProjectionKind::BlockDiagonal,
            Structure::Entangling { .. } => ProjectionKind::Entangling,
            Structure::Custom { .. } => ProjectionKind::Custom,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Tensor factor dimensions `(d_A, d_B)` for bipartite kinds.
    pub fn factor_dims(&self) -> Option<(usize, usize)> {
        match &self.structure {
            Structure::PartialTrace { dim_a, dim_b, .. } => Some((*dim_a, *dim_b)),
            Structure::Entangling { dim_a, family } => Some((*dim_a, family.bath_dim())),
            _ => None,
        }
    }

    pub fn blocks(&self) -> Option<&[Vec<usize>]> {
        match &self.structure {
            Structure::BlockDiagonal { blocks } => Some(blocks),
            _ => None,
        }
    }

    pub fn family(&self) -> Option<&EntanglingFamily> {
        match &self.structure {
            Structure::Entangling { family, .. } => Some(family),
            _ => None,
        }
    }

    pub fn bath_state(&self) -> Option<&CMatrix> {
        match &self.structure {
            Structure::PartialTrace { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    /// The Kraus operators `V_α`, generated on demand.
    pub fn kraus_ops(&self) -> Vec<CMatrix> {
        match &self.structure {
            Structure::PartialTrace {
                dim_a,
                dim_b,
                sigma,
            } => {
                let (s, chi) = hermitian_eigen(sigma);
                let smax = s.iter().cloned().fold(0.0, f64::max);
                let id_a = CMatrix::identity(*dim_a, *dim_a);
                let mut out = Vec::new();
                for (k, &sk) in s.iter().enumerate() {
                    if sk <= 1e-15 * smax {
                        continue;
                    }
                    let col = chi.column(k) * c(sk.sqrt());
                    for alpha in 0..*dim_b {
                        // √s_k |χ_k⟩⟨α|
                        let mut bath = CMatrix::zeros(*dim_b, *dim_b);
                        bath.set_column(alpha, &col);
                        out.push(id_a.kronecker(&bath));
                    }
                }
                out
            }
            Structure::Diagonal { basis } => (0..self.dim)
                .map(|a| {
                    let u = basis.column(a);
                    u * u.adjoint()
                })
                .collect(),
            Structure::BlockDiagonal { blocks } => blocks
                .iter()
                .map(|b| block_projector(self.dim, b))
                .collect(),
            Structure::Entangling { dim_a, family } => {
                let db = family.bath_dim();
                let id_a = CMatrix::identity(*dim_a, *dim_a);
                let mut out = Vec::with_capacity(db * db);
                for alpha in 0..db {
                    for alpha2 in 0..db {
                        let mut bath = CMatrix::zeros(db, db);
                        for (cn, dn) in family.c_ops.iter().zip(&family.d_ops) {
                            // D_n† |α⟩⟨α'| C_n
                            let ket = dn.adjoint().column(alpha).into_owned();
                            let bra = cn.row(alpha2).into_owned();
                            bath += ket * bra;
                        }
                        out.push(id_a.kronecker(&bath));
                    }
                }
                out
            }
            Structure::Custom { kraus } => kraus.clone(),
        }
    }

    /// `P₀ρ`, using the structural form of the kind.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        match &self.structure {
            Structure::PartialTrace {
                dim_a,
                dim_b,
                sigma,
            } => partial_trace_b(rho, *dim_a, *dim_b).kronecker(sigma),
            Structure::Diagonal { basis } => {
                let r = basis.adjoint() * rho * basis;
                let diag = CMatrix::from_fn(self.dim, self.dim, |i, j| {
                    if i == j {
                        r[(i, i)]
                    } else {
                        c(0.0)
                    }
                });
                basis * diag * basis.adjoint()
            }
            Structure::BlockDiagonal { blocks } => block_mask(rho, blocks),
            Structure::Entangling { dim_a, family } => {
                let db = family.bath_dim();
                let id_a = CMatrix::identity(*dim_a, *dim_a);
                let mut out = CMatrix::zeros(self.dim, self.dim);
                for (a, b) in family.a_ops.iter().zip(&family.b_ops) {
                    let reduced = partial_trace_b(&(rho * id_a.kronecker(a)), *dim_a, db);
                    out += reduced.kronecker(b);
                }
                out
            }
            Structure::Custom { kraus } => apply_kraus_list(kraus, rho),
        }
    }

    pub fn try_apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: rho.nrows(),
            });
        }
        Ok(self.apply(rho))
    }

    /// `Σ_α V_α ρ V_α†` evaluated literally from the Kraus list.
    pub fn apply_kraus(&self, rho: &CMatrix) -> CMatrix {
        apply_kraus_list(&self.kraus_ops(), rho)
    }

    /// Heisenberg-picture dual `P̃₀X = Σ_α V_α† X V_α`.
    pub fn apply_dual(&self, x: &CMatrix) -> CMatrix {
        match &self.structure {
            Structure::PartialTrace {
                dim_a,
                dim_b,
                sigma,
            } => {
                let id_a = CMatrix::identity(*dim_a, *dim_a);
                let id_b = CMatrix::identity(*dim_b, *dim_b);
                partial_trace_b(&(x * id_a.kronecker(sigma)), *dim_a, *dim_b).kronecker(&id_b)
            }
            Structure::Diagonal { .. } | Structure::BlockDiagonal { .. } => self.apply(x),
            Structure::Entangling { dim_a, family } => {
                let db = family.bath_dim();
                let id_a = CMatrix::identity(*dim_a, *dim_a);
                let mut out = CMatrix::zeros(self.dim, self.dim);
                for (a, b) in family.a_ops.iter().zip(&family.b_ops) {
                    let reduced = partial_trace_b(&(x * id_a.kronecker(b)), *dim_a, db);
                    out += reduced.kronecker(a);
                }
                out
            }
            Structure::Custom { kraus } => {
                let mut out = CMatrix::zeros(self.dim, self.dim);
                for v in kraus {
                    out += v.adjoint() * x * v;
                }
                out
            }
        }
    }

    /// Dense matrix of `P₀` (cached for small dimensions).
    pub fn superoperator(&self) -> Superoperator {
        match &self.matrix {
            Some(m) => m.clone(),
            None => Superoperator::from_fn(self.dim, |x| self.apply(x)),
        }
    }

    /// `P₁ = 1 − P₀`.
    pub fn complement(&self) -> Superoperator {
        &Superoperator::identity(self.dim) - &self.superoperator()
    }

    /// Operators spanning the image `𝓑₀ = P₀(𝓑)`.
    pub fn image_spanning_set(&self) -> Vec<CMatrix> {
        let d = self.dim;
        match &self.structure {
            Structure::PartialTrace { dim_a, sigma, .. } => {
                let mut out = Vec::new();
                for j in 0..*dim_a {
                    for i in 0..*dim_a {
                        out.push(unit(*dim_a, i, j).kronecker(sigma));
                    }
                }
                out
            }
            Structure::Diagonal { basis } => (0..d)
                .map(|a| {
                    let u = basis.column(a);
                    u * u.adjoint()
                })
                .collect(),
            Structure::BlockDiagonal { blocks } => {
                let mut out = Vec::new();
                for b in blocks {
                    for &j in b {
                        for &i in b {
                            out.push(unit(d, i, j));
                        }
                    }
                }
                out
            }
            Structure::Entangling { dim_a, family } => {
                let mut out = Vec::new();
                for b in &family.b_ops {
                    for j in 0..*dim_a {
                        for i in 0..*dim_a {
                            out.push(unit(*dim_a, i, j).kronecker(b));
                        }
                    }
                }
                out
            }
            Structure::Custom { .. } => {
                let mut out = Vec::new();
                for j in 0..d {
                    for i in 0..d {
                        out.push(self.apply(&unit(d, i, j)));
                    }
                }
                out
            }
        }
    }
}

/// `E_ij` in dimension `d`.
pub fn unit(d: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(i, j)] = c(1.0);
    m
}

/// `Tr_B` on `𝓗_A ⊗ 𝓗_B` with the kron index `i_a·d_B + i_b`.
pub fn partial_trace_b(rho: &CMatrix, dim_a: usize, dim_b: usize) -> CMatrix {
    CMatrix::from_fn(dim_a, dim_a, |a, b| {
        (0..dim_b)
            .map(|k| rho[(a * dim_b + k, b * dim_b + k)])
            .sum::<C64>()
    })
}

/// `Tr_A` on `𝓗_A ⊗ 𝓗_B`.
pub fn partial_trace_a(rho: &CMatrix, dim_a: usize, dim_b: usize) -> CMatrix {
    CMatrix::from_fn(dim_b, dim_b, |a, b| {
        (0..dim_a)
            .map(|k| rho[(k * dim_b + a, k * dim_b + b)])
            .sum::<C64>()
    })
}

fn block_projector(d: usize, block: &[usize]) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for &i in block {
        m[(i, i)] = c(1.0);
    }
    m
}

fn block_mask(rho: &CMatrix, blocks: &[Vec<usize>]) -> CMatrix {
    let d = rho.nrows();
    let mut label = vec![0usize; d];
    for (k, b) in blocks.iter().enumerate() {
        for &i in b {
            label[i] = k;
        }
    }
    CMatrix::from_fn(d, d, |i, j| {
        if label[i] == label[j] {
            rho[(i, j)]
        } else {
            c(0.0)
        }
    })
}

fn apply_kraus_list(kraus: &[CMatrix], rho: &CMatrix) -> CMatrix {
    let d = rho.nrows();
    let mut out = CMatrix::zeros(d, d);
    for v in kraus {
        out += v * rho * v.adjoint();
    }
    out
}

fn kraus_superoperator(d: usize, kraus: &[CMatrix]) -> Superoperator {
    let mut m = CMatrix::zeros(d * d, d * d);
    for v in kraus {
        m += v.conjugate().kronecker(v);
    }
    Superoperator::from_matrix(d, m).expect("kraus operators are d × d")
}

/// `P₀ρ = Tr_B(ρ) ⊗ σ`.
pub fn partial_trace_projection(
    dim_a: usize,
    dim_b: usize,
    sigma: &DensityMatrix,
) -> Result<KrausProjection> {
    if sigma.dim() != dim_b {
        return Err(Error::DimensionMismatch {
            expected: dim_b,
            got: sigma.dim(),
        });
    }
    KrausProjection::finish(
        dim_a * dim_b,
        Structure::PartialTrace {
            dim_a,
            dim_b,
            sigma: sigma.matrix().clone(),
        },
    )
}

/// Dephasing in the orthonormal basis given by the columns of `basis`.
pub fn diagonal_projection(basis: &CMatrix) -> Result<KrausProjection> {
    let d = basis.nrows();
    if basis.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: basis.ncols(),
        });
    }
    let residual = max_abs(&(basis.adjoint() * basis - CMatrix::identity(d, d)));
    if residual > ALGEBRAIC_TOL {
        return Err(Error::NotUnitary { residual });
    }
    KrausProjection::finish(
        d,
        Structure::Diagonal {
            basis: basis.clone(),
        },
    )
}

/// `P₀ρ = Σ_α V_α ρ V_α` for coordinate projectors onto the given blocks.
///
/// Indices are 0-based and must partition `0..d`.
pub fn block_diagonal_projection(d: usize, index_sets: &[Vec<usize>]) -> Result<KrausProjection> {
    let mut seen = vec![false; d];
    for set in index_sets {
        if set.is_empty() {
            return Err(Error::InvalidPartition {
                reason: "empty block".into(),
            });
        }
        for &i in set {
            if i >= d {
                return Err(Error::InvalidPartition {
                    reason: format!("index {i} out of range 0..{d}"),
                });
            }
            if seen[i] {
                return Err(Error::InvalidPartition {
                    reason: format!("index {i} appears in two blocks"),
                });
            }
            seen[i] = true;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPartition {
            reason: format!("index {missing} not covered"),
        });
    }
    let mut blocks: Vec<Vec<usize>> = index_sets.to_vec();
    for b in blocks.iter_mut() {
        b.sort_unstable();
    }
    KrausProjection::finish(d, Structure::BlockDiagonal { blocks })
}

/// The entangling projection `P₀ρ = Σ_n Tr_B(ρ(1⊗A_n)) ⊗ B_n`.
pub fn entangling_projection(family: &EntanglingFamily, dim_a: usize) -> Result<KrausProjection> {
    KrausProjection::finish(
        dim_a * family.bath_dim(),
        Structure::Entangling {
            dim_a,
            family: family.clone(),
        },
    )
}

/// A projection given directly by Kraus operators; idempotence and dual
/// unitality are verified.
pub fn custom_projection(kraus: Vec<CMatrix>) -> Result<KrausProjection> {
    let d = kraus.first().map(|k| k.nrows()).ok_or(Error::InvalidParameter {
        name: "kraus",
        reason: "empty Kraus list".into(),
    })?;
    for k in &kraus {
        if k.nrows() != d || k.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: k.nrows().max(k.ncols()),
            });
        }
    }
    let p = KrausProjection::finish(d, Structure::Custom { kraus })?;
    let unital = dual_unitality_residual(&p);
    if unital > ALGEBRAIC_TOL {
        return Err(Error::GateFailure {
            check: "dual unitality Σ V†V = 1",
            residual: unital,
            tol: ALGEBRAIC_TOL,
        });
    }
    let idem = idempotence_residual(&p);
    if idem > ALGEBRAIC_TOL {
        return Err(Error::GateFailure {
            check: "idempotence P0² = P0",
            residual: idem,
            tol: ALGEBRAIC_TOL,
        });
    }
    Ok(p)
}

pub fn apply_projection(p: &KrausProjection, rho: &CMatrix) -> Result<CMatrix> {
    p.try_apply(rho)
}

/// Operator norm of a linear map on `d × d` operators.
///
/// Exact (largest singular value) for `d ≤ MATRIX_CACHE_DIM`; otherwise a
/// power iteration on `F†F` using only operator-level applications, which
/// converges from below.
pub fn map_norm(
    d: usize,
    f: impl Fn(&CMatrix) -> CMatrix,
    f_adj: impl Fn(&CMatrix) -> CMatrix,
) -> f64 {
    if d <= MATRIX_CACHE_DIM {
        return Superoperator::from_fn(d, f).norm();
    }
    let mut r = random::rng(0x5eed);
    let mut x = random::random_matrix(&mut r, d);
    x /= c(x.norm());
    let mut estimate = 0.0;
    for _ in 0..200 {
        let y = f_adj(&f(&x));
        let n = y.norm();
        if n == 0.0 {
            return 0.0;
        }
        let next = n.sqrt();
        x = y / c(n);
        if (next - estimate).abs() <= 1e-12 * next {
            estimate = next;
            break;
        }
        estimate = next;
    }
    estimate
}

pub fn idempotence_residual(p: &KrausProjection) -> f64 {
    map_norm(
        p.dim,
        |x| {
            let px = p.apply(x);
            p.apply(&px) - px
        },
        |x| {
            let px = p.apply_dual(x);
            p.apply_dual(&px) - px
        },
    )
}

pub fn dual_unitality_residual(p: &KrausProjection) -> f64 {
    let d = p.dim;
    max_abs(&(p.apply_dual(&CMatrix::identity(d, d)) - CMatrix::identity(d, d)))
}

/// `max |Tr(P₀E_ij) − δ_ij|` over matrix units (spanning set).
pub fn trace_preservation_residual(p: &KrausProjection) -> f64 {
    // Tr(P₀ X) = Tr(P̃₀(1) X), so the residual is that of the dual unit.
    dual_unitality_residual(p)
}

/// Result of a gate check.
#[derive(Debug, Clone, PartialEq)]
pub struct GateReport {
    pub check: &'static str,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    /// For entangling projections: `(n, ‖[H_B,A_n]‖, ‖[H_B,B_n]‖)`.
    pub per_n: Vec<(usize, f64, f64)>,
}

impl GateReport {
    pub fn into_result(self) -> Result<Self> {
        if self.pass {
            Ok(self)
        } else {
            Err(Error::GateFailure {
                check: self.check,
                residual: self.residual,
                tol: self.tol,
            })
        }
    }
}

/// `‖Z P₀ − P₀ Z‖` for `Z = −i[H₀, ·]`.
pub fn check_dynamical_compatibility(
    p: &KrausProjection,
    h0: &HermitianOperator,
    tol: f64,
) -> GateReport {
    let h = h0.matrix();
    let z = |x: &CMatrix| commutator(h, x) * (-crate::opcore::I);
    let residual = map_norm(
        p.dim,
        |x| z(&p.apply(x)) - p.apply(&z(x)),
        // adjoint of ZP₀ − P₀Z is −P̃₀Z + ZP̃₀
        |x| z(&p.apply_dual(x)) - p.apply_dual(&z(x)),
    );
    let mut per_n = Vec::new();
    if let Some(family) = p.family() {
        let (da, db) = p.factor_dims().expect("entangling is bipartite");
        let hb = partial_trace_a(h, da, db) / c(da as f64);
        for (n, (a, b)) in family.a_ops.iter().zip(&family.b_ops).enumerate() {
            per_n.push((n, max_abs(&commutator(&hb, a)), max_abs(&commutator(&hb, b))));
        }
    }
    GateReport {
        check: "dynamical compatibility [Z,P0]=0",
        residual,
        tol,
        pass: residual <= tol,
        per_n,
    }
}

/// `‖P₀ A P₀‖` for `A = −i[H', ·]`.
pub fn check_no_first_order(p: &KrausProjection, hp: &HermitianOperator, tol: f64) -> GateReport {
    let h = hp.matrix();
    let a = |x: &CMatrix| commutator(h, x) * (-crate::opcore::I);
    let residual = map_norm(
        p.dim,
        |x| p.apply(&a(&p.apply(x))),
        |x| p.apply_dual(&a(&p.apply_dual(x))),
    );
    GateReport {
        check: "no first order A00=0",
        residual,
        tol,
        pass: residual <= tol,
        per_n: Vec::new(),
    }
}

/// Pass/fail state of one audit line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub check: String,
    pub residual: f64,
    pub verdict: Verdict,
}

impl AuditEntry {
    pub fn new(check: impl Into<String>, residual: f64, tol: f64) -> Self {
        Self {
            check: check.into(),
            residual,
            verdict: if residual <= tol {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.verdict != Verdict::Fail)
    }

    pub fn push(&mut self, e: AuditEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: AuditReport) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, check: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.check == check)
    }
}

/// Residuals of the Kraus-projection hypotheses: idempotence, complete
/// positivity (Choi test), dual unitality and trace preservation. For
/// entangling projections the observable-subalgebra closure is added.
pub fn projection_audit(p: &KrausProjection) -> AuditReport {
    let tol = ALGEBRAIC_TOL;
    let mut report = AuditReport::default();
    report.push(AuditEntry::new("idempotence", idempotence_residual(p), tol));
    if p.dim <= MATRIX_CACHE_DIM {
        let choi = positivity::choi(&p.superoperator());
        let min = choi.min_eigenvalue();
        report.push(AuditEntry::new("complete positivity", (-min).max(0.0), tol));
    } else {
        report.push(AuditEntry {
            check: "complete positivity".into(),
            residual: 0.0,
            verdict: Verdict::Skipped,
        });
    }
    report.push(AuditEntry::new(
        "dual unitality",
        dual_unitality_residual(p),
        tol,
    ));
    report.push(AuditEntry::new(
        "trace preservation",
        trace_preservation_residual(p),
        tol,
    ));
    if p.kind() == ProjectionKind::Entangling {
        report.push(AuditEntry::new(
            "observable subalgebra closure",
            subalgebra_closure_residual(p, 4, 11),
            1e-9,
        ));
    }
    report
}

/// `max ‖P̃₀(P̃₀X·P̃₀Y) − P̃₀X·P̃₀Y‖` over seeded random `X, Y`.
pub fn subalgebra_closure_residual(p: &KrausProjection, trials: usize, seed: u64) -> f64 {
    let mut r = random::rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let x = p.apply_dual(&random::random_matrix(&mut r, p.dim));
        let y = p.apply_dual(&random::random_matrix(&mut r, p.dim));
        let xy = &x * &y;
        worst = worst.max(max_abs(&(p.apply_dual(&xy) - xy)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::{pauli_x, HermitianOperator};
    use crate::testutil::{random_density, random_hermitian, random_matrix, random_unitary, rng};

    fn max_entangled_2x2() -> CMatrix {
        let mut psi = CMatrix::zeros(4, 1);
        psi[(0, 0)] = c(std::f64::consts::FRAC_1_SQRT_2);
        psi[(3, 0)] = c(std::f64::consts::FRAC_1_SQRT_2);
        &psi * psi.adjoint()
    }

    fn check_invariants(p: &KrausProjection, seed: u64) {
        let mut r = rng(seed);
        assert!(idempotence_residual(p) < 1e-10, "{:?}", p.kind());
        assert!(dual_unitality_residual(p) < 1e-10);
        for _ in 0..50 {
            let x = random_matrix(&mut r, p.dim());
            assert!((p.apply(&x).trace() - x.trace()).norm() < 1e-10);
        }
        let p1 = p.complement();
        assert!(max_abs((&p.superoperator() * &p1).matrix()) < 1e-10);
        let x = random_matrix(&mut r, p.dim());
        assert!(max_abs(&(p.apply(&x) - p.apply_kraus(&x))) < 1e-12);
        assert!(max_abs(&(p.apply(&x) - p.superoperator().apply(&x))) < 1e-12);
    }

    pub(crate) fn diagonal_family(db: usize, split: usize, seed: u64) -> EntanglingFamily {
        // A_1 projects on 0..split, A_2 on split..db; B_n are states in those
        // ranges; D_n = U √B_n for a random unitary U.
        let mut r = rng(seed);
        let u = random_unitary(&mut r, db);
        let ranges = [(0, split), (split, db)];
        let mut cs = Vec::new();
        let mut ds = Vec::new();
        for &(lo, hi) in &ranges {
            let mut a = CMatrix::zeros(db, db);
            for i in lo..hi {
                a[(i, i)] = c(1.0);
            }
            let sub = random_density(&mut r, hi - lo);
            let mut b = CMatrix::zeros(db, db);
            b.view_mut((lo, lo), (hi - lo, hi - lo)).copy_from(sub.matrix());
            let (s, v) = crate::opcore::hermitian_eigen(&b);
            let sqrt = &v
                * CMatrix::from_fn(db, db, |i, j| if i == j { c(s[i].max(0.0).sqrt()) } else { c(0.0) })
                * v.adjoint();
            cs.push(a);
            ds.push(&u * sqrt);
        }
        EntanglingFamily::new(cs, ds).unwrap()
    }

    #[test]
    fn partial_trace_examples() {
        let mut r = rng(10);
        let sigma = random_density(&mut r, 2);
        let p = partial_trace_projection(2, 2, &sigma).unwrap();
        let rho_a = random_density(&mut r, 2);
        let prod = rho_a.matrix().kronecker(sigma.matrix());
        assert!(max_abs(&(p.apply(&prod) - &prod)) < 1e-12);
        let tau = random_density(&mut r, 2);
        let other = rho_a.matrix().kronecker(tau.matrix());
        assert!(max_abs(&(p.apply(&other) - &prod)) < 1e-12);
        let out = p.apply(&max_entangled_2x2());
        let expect = (CMatrix::identity(2, 2) * c(0.5)).kronecker(sigma.matrix());
        assert!(max_abs(&(out - expect)) < 1e-12);
        check_invariants(&p, 11);
    }

    #[test]
    fn partial_trace_drops_zero_weight_kraus() {
        let sigma = DensityMatrix::new(CMatrix::from_row_slice(
            3,
            3,
            &[c(0.5), c(0.0), c(0.0), c(0.0), c(0.5), c(0.0), c(0.0), c(0.0), c(0.0)],
        ))
        .unwrap();
        let p = partial_trace_projection(2, 3, &sigma).unwrap();
        assert_eq!(p.kraus_ops().len(), 2 * 3);
        check_invariants(&p, 12);
    }

    #[test]
    fn partial_trace_rejects_wrong_dims() {
        let sigma = DensityMatrix::maximally_mixed(3);
        assert!(partial_trace_projection(2, 2, &sigma).is_err());
    }

    #[test]
    fn diagonal_examples() {
        let id = CMatrix::identity(2, 2);
        let p = diagonal_projection(&id).unwrap();
        let diag = CMatrix::from_row_slice(2, 2, &[c(0.3), c(0.0), c(0.0), c(0.7)]);
        assert!(max_abs(&(p.apply(&diag) - &diag)) < 1e-15);
        assert!(max_abs(&p.apply(&pauli_x())) < 1e-15);
        let rho = (CMatrix::identity(2, 2) + pauli_x()) * c(0.5);
        assert!(max_abs(&(p.apply(&rho) - id * c(0.5))) < 1e-15);
        let mut r = rng(13);
        let u = random_unitary(&mut r, 4);
        check_invariants(&diagonal_projection(&u).unwrap(), 14);
        let bad = CMatrix::identity(2, 2) * c(2.0);
        assert!(matches!(diagonal_projection(&bad), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn block_examples() {
        let p = block_diagonal_projection(3, &[vec![0, 1, 2]]).unwrap();
        assert!(p.superoperator().max_abs_diff(&Superoperator::identity(3)) < 1e-15);
        let singles = block_diagonal_projection(3, &[vec![0], vec![1], vec![2]]).unwrap();
        let diag = diagonal_projection(&CMatrix::identity(3, 3)).unwrap();
        assert!(singles.superoperator().max_abs_diff(&diag.superoperator()) < 1e-15);
        let mut r = rng(15);
        let p = block_diagonal_projection(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let rho = random_matrix(&mut r, 4);
        let out = p.apply(&rho);
        for i in 0..4 {
            for j in 0..4 {
                let same = (i < 2) == (j < 2);
                let expect = if same { rho[(i, j)] } else { c(0.0) };
                assert_eq!(out[(i, j)], expect);
            }
        }
        check_invariants(&p, 16);
    }

    #[test]
    fn block_partition_errors() {
        assert!(block_diagonal_projection(3, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(block_diagonal_projection(3, &[vec![0, 1]]).is_err());
        assert!(block_diagonal_projection(3, &[vec![0, 1, 5]]).is_err());
    }

    #[test]
    fn entangling_reduces_to_partial_trace() {
        let mut r = rng(17);
        let sigma = random_density(&mut r, 3);
        let (s, v) = crate::opcore::hermitian_eigen(sigma.matrix());
        let sqrt = &v
            * CMatrix::from_fn(3, 3, |i, j| if i == j { c(s[i].sqrt()) } else { c(0.0) })
            * v.adjoint();
        let fam = EntanglingFamily::new(vec![CMatrix::identity(3, 3)], vec![sqrt]).unwrap();
        let ent = entangling_projection(&fam, 2).unwrap();
        let pt = partial_trace_projection(2, 3, &sigma).unwrap();
        assert!(ent.superoperator().max_abs_diff(&pt.superoperator()) < 1e-12);
    }

    #[test]
    fn entangling_fixed_points_and_cross_check() {
        let fam = diagonal_family(4, 2, 18);
        let p = entangling_projection(&fam, 2).unwrap();
        let mut r = rng(19);
        for b in fam.b_ops() {
            let rho_a = random_density(&mut r, 2);
            let x = rho_a.matrix().kronecker(b);
            assert!(max_abs(&(p.apply(&x) - &x)) < 1e-12);
        }
        let kraus = kraus_superoperator(8, &p.kraus_ops());
        let closed = Superoperator::from_fn(8, |x| p.apply(x));
        assert!(kraus.max_abs_diff(&closed) < 1e-10);
        check_invariants(&p, 20);
        assert!(subalgebra_closure_residual(&p, 4, 21) < 1e-9);
    }

    #[test]
    fn entangling_two_level_diagonal_bath() {
        let a1 = unit(2, 0, 0);
        let a2 = unit(2, 1, 1);
        let fam = EntanglingFamily::new(vec![a1.clone(), a2.clone()], vec![a1.clone(), a2.clone()])
            .unwrap();
        let p = entangling_projection(&fam, 2).unwrap();
        let mut r = rng(22);
        let rho = random_density(&mut r, 4);
        // Σ_n Tr_B(ρ(1⊗A_n)) ⊗ B_n written out entrywise: keep bath-diagonal
        // entries (n,n), drop bath coherences.
        let m = rho.matrix();
        let expect = CMatrix::from_fn(4, 4, |i, j| if i % 2 == j % 2 { m[(i, j)] } else { c(0.0) });
        assert!(max_abs(&(p.apply(m) - &expect)) < 1e-12);
        assert!(max_abs(&(p.apply_kraus(m) - &expect)) < 1e-12);
    }

    #[test]
    fn entangling_family_violations_reported() {
        let a1 = unit(2, 0, 0);
        let a2 = unit(2, 1, 1);
        // D_1 = D_2 overlap
        let err = EntanglingFamily::new(vec![a1.clone(), a2.clone()], vec![a1.clone(), a1.clone()])
            .unwrap_err();
        assert!(matches!(
            err,
            Error::FamilyInvalid {
                condition: "D_n†D_n' = δ B_n",
                n: 0,
                m: 1,
                ..
            }
        ));
        // incomplete A_n
        let err = EntanglingFamily::new(vec![a1.clone()], vec![a1.clone()]).unwrap_err();
        assert!(matches!(err, Error::FamilyInvalid { condition: "Σ A_n = 1", .. }));
        // A_n not orthogonal
        let h = CMatrix::from_row_slice(2, 2, &[c(0.5), c(0.5), c(0.5), c(0.5)]);
        let comp = CMatrix::identity(2, 2) - &h;
        let (s1, s2) = (h.clone(), comp.clone());
        let err = EntanglingFamily::new(vec![s1, s2], vec![a1.clone(), a2.clone()]).unwrap_err();
        assert!(matches!(
            err,
            Error::FamilyInvalid { condition: "Tr(A_n B_n') = δ", .. }
                | Error::FamilyInvalid { condition: "A_n A_n' = δ A_n", .. }
        ));
        // Tr(A_n B_n) ≠ 1
        let half = &a1 * c(std::f64::consts::FRAC_1_SQRT_2);
        let err = EntanglingFamily::new(vec![a1.clone(), a2.clone()], vec![half, a2.clone()])
            .unwrap_err();
        assert!(matches!(err, Error::FamilyInvalid { condition: "Tr(A_n B_n') = δ", .. }));
    }

    #[test]
    fn non_orthogonal_a_is_caught_by_product_rule() {
        // A_1 = |+⟩⟨+| and A_2 = 1 − A_1 sum to one but B_n = diag units break Tr(A_n B_m)
        // first; build a case where only the product rule fails: N = 2 with
        // A_1 = A_2 = 1/2 · 1 (C_n = 1/√2) and matching D_n.
        let half = CMatrix::identity(2, 2) * c(std::f64::consts::FRAC_1_SQRT_2);
        let d1 = unit(2, 0, 0) * c(std::f64::consts::SQRT_2);
        let d2 = unit(2, 1, 1) * c(std::f64::consts::SQRT_2);
        let err = EntanglingFamily::new(vec![half.clone(), half], vec![d1, d2]).unwrap_err();
        assert!(matches!(err, Error::FamilyInvalid { condition: "A_n A_n' = δ A_n", .. }));
    }

    #[test]
    fn dynamical_compatibility_examples() {
        let mut r = rng(23);
        let u = random_unitary(&mut r, 3);
        let h0 = HermitianOperator::new(
            &u * CMatrix::from_fn(3, 3, |i, j| if i == j { c(i as f64 * 0.7 + 0.1) } else { c(0.0) })
                * u.adjoint(),
        )
        .unwrap();
        let p = diagonal_projection(&u).unwrap();
        assert!(check_dynamical_compatibility(&p, &h0, 1e-10).pass);

        let ha = random_hermitian(&mut r, 2);
        let hb = random_hermitian(&mut r, 2);
        let local = ha.kron(&HermitianOperator::identity(2)).matrix()
            + HermitianOperator::identity(2).kron(&hb).matrix();
        let h0 = HermitianOperator::new(local).unwrap();
        let gibbs = DensityMatrix::gibbs(&hb, 1.0);
        let good = partial_trace_projection(2, 2, &gibbs).unwrap();
        assert!(check_dynamical_compatibility(&good, &h0, 1e-10).pass);
        let other = random_density(&mut r, 2);
        let bad = partial_trace_projection(2, 2, &other).unwrap();
        let rep = check_dynamical_compatibility(&bad, &h0, 1e-10);
        assert!(!rep.pass);
        assert!(rep.clone().into_result().is_err());
    }

    #[test]
    fn entangling_commutation_criterion_both_directions() {
        let a1 = unit(2, 0, 0);
        let a2 = unit(2, 1, 1);
        let fam = EntanglingFamily::new(vec![a1.clone(), a2.clone()], vec![a1.clone(), a2.clone()])
            .unwrap();
        let p = entangling_projection(&fam, 2).unwrap();
        let ha = HermitianOperator::new(pauli_x() * c(0.4)).unwrap();
        let id = HermitianOperator::identity(2);
        let diag_b = HermitianOperator::from_diagonal(&[0.0, 1.3]);
        let h0 = HermitianOperator::new(ha.kron(&id).matrix() + id.kron(&diag_b).matrix()).unwrap();
        let rep = check_dynamical_compatibility(&p, &h0, 1e-10);
        assert!(rep.pass);
        assert!(rep.per_n.iter().all(|&(_, x, y)| x < 1e-12 && y < 1e-12));

        let flip_b = HermitianOperator::new(pauli_x() * c(0.9)).unwrap();
        let h0 = HermitianOperator::new(ha.kron(&id).matrix() + id.kron(&flip_b).matrix()).unwrap();
        let rep = check_dynamical_compatibility(&p, &h0, 1e-10);
        assert!(!rep.pass);
        assert!(rep.per_n.iter().any(|&(_, x, y)| x > 1e-3 || y > 1e-3));
    }

    #[test]
    fn no_first_order_examples() {
        let mut r = rng(24);
        let p = block_diagonal_projection(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let h = random_hermitian(&mut r, 4);
        // zero the diagonal blocks: strictly block-off-diagonal
        let off = HermitianOperator::new(
            h.matrix() - p.apply(h.matrix()),
        )
        .unwrap();
        assert!(check_no_first_order(&p, &off, 1e-10).pass);
        let h0 = HermitianOperator::from_diagonal(&[0.0, 1.0, 2.5, 4.0]);
        assert!(!check_no_first_order(&p, &h0, 1e-10).pass);

        let sigma = DensityMatrix::gibbs(&HermitianOperator::from_diagonal(&[0.0, 1.0]), 1.0);
        let pt = partial_trace_projection(2, 2, &sigma).unwrap();
        let b = random_hermitian(&mut r, 2);
        let shift = (b.matrix() * sigma.matrix()).trace();
        let b0 = b.matrix() - CMatrix::identity(2, 2) * shift;
        let hp = HermitianOperator::new(pauli_x().kronecker(&b0)).unwrap();
        assert!(check_no_first_order(&pt, &hp, 1e-10).pass);
    }

    #[test]
    fn audits_pass_for_builtin_kinds() {
        let mut r = rng(25);
        let sigma = random_density(&mut r, 3);
        let u = random_unitary(&mut r, 3);
        let projections = vec![
            partial_trace_projection(2, 3, &sigma).unwrap(),
            diagonal_projection(&u).unwrap(),
            block_diagonal_projection(5, &[vec![0, 3], vec![1], vec![2, 4]]).unwrap(),
            entangling_projection(&diagonal_family(4, 1, 26), 2).unwrap(),
        ];
        for p in &projections {
            let report = projection_audit(p);
            assert!(report.all_pass(), "{:?}: {:?}", p.kind(), report);
        }
        let choi = positivity::choi(&projections[1].superoperator());
        assert!(choi.min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn power_iteration_norm_matches_exact() {
        let mut r = rng(27);
        let d = 20;
        let h = random_hermitian(&mut r, d);
        let est = map_norm(
            d,
            |x| commutator(h.matrix(), x),
            |x| -commutator(h.matrix(), x),
        );
        assert!((est - h.spectral_spread()).abs() < 1e-8 * h.spectral_spread());
    }

    #[test]
    fn custom_projection_validates() {
        let v0 = unit(2, 0, 0);
        let v1 = unit(2, 1, 1);
        let p = custom_projection(vec![v0.clone(), v1]).unwrap();
        assert_eq!(p.kind(), ProjectionKind::Custom);
        assert!(custom_projection(vec![v0]).is_err());
    }
}
