//! Choi matrices, GKS canonical forms and CP audits.
//!
//! Choi convention: `J = Σ_ij E_ij ⊗ S(E_ij)`, so that a Kraus map
//! `X ↦ VXV†` has `J = vec(V) vec(V)†`.

use crate::error::{Error, Result};
use crate::opcore::{
    c, hermitian_eigen, max_abs, vectorize, CMatrix, CVector, HermitianOperator, Superoperator,
    I,
};
use crate::projections::KrausProjection;

/// Eigenvalue floor used by the CP verdicts.
pub const EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    dim: usize,
    m: CMatrix,
}

impl ChoiMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn hermiticity_residual(&self) -> f64 {
        max_abs(&(&self.m - self.m.adjoint()))
    }

    /// Eigenvalues of the hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.m).0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

pub fn choi(s: &Superoperator) -> ChoiMatrix {
    let d = s.dim();
    let sm = s.matrix();
    let m = CMatrix::from_fn(d * d, d * d, |r, col| {
        let (i, k) = (r / d, r % d);
        let (j, l) = (col / d, col % d);
        sm[(k + l * d, i + j * d)]
    });
    ChoiMatrix { dim: d, m }
}

/// Inverse of [`choi`].
pub fn from_choi(j: &ChoiMatrix) -> Superoperator {
    let d = j.dim;
    let m = CMatrix::from_fn(d * d, d * d, |r, col| {
        let (k, l) = (r % d, r / d);
        let (i, jj) = (col % d, col / d);
        j.m[(i * d + k, jj * d + l)]
    });
    Superoperator::from_matrix(d, m).expect("square by construction")
}

pub fn is_cp(s: &Superoperator, tol: f64) -> bool {
    choi(s).min_eigenvalue() >= -tol
}

/// `max_ij |Tr S(E_ij) − δ_ij|`.
pub fn trace_preservation_residual(s: &Superoperator) -> f64 {
    let d = s.dim();
    let m = s.matrix();
    let mut worst = 0.0_f64;
    for j in 0..d {
        for i in 0..d {
            let col = i + j * d;
            let tr: crate::opcore::C64 = (0..d).map(|k| m[(k + k * d, col)]).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((tr - c(expect)).norm());
        }
    }
    worst
}

pub fn is_trace_preserving(s: &Superoperator, tol: f64) -> bool {
    trace_preservation_residual(s) <= tol
}

/// Transpose map, the standard positive but not completely positive map.
pub fn transpose_map(d: usize) -> Superoperator {
    Superoperator::from_fn(d, |x| x.transpose())
}

/// HS-orthonormal generalized Gell-Mann matrices (`d² − 1` traceless operators).
pub fn gell_mann_basis(d: usize) -> Vec<CMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d - 1);
    for j in 0..d {
        for k in (j + 1)..d {
            let mut m = CMatrix::zeros(d, d);
            m[(j, k)] = c(s);
            m[(k, j)] = c(s);
            out.push(m);
            let mut m = CMatrix::zeros(d, d);
            m[(j, k)] = -I * s;
            m[(k, j)] = I * s;
            out.push(m);
        }
    }
    for l in 1..d {
        let norm = ((l * (l + 1)) as f64).sqrt();
        let mut m = CMatrix::zeros(d, d);
        for j in 0..l {
            m[(j, j)] = c(1.0 / norm);
        }
        m[(l, l)] = c(-(l as f64) / norm);
        out.push(m);
    }
    out
}

/// Subspace on which conditional complete positivity is tested.
#[derive(Debug, Clone, Copy)]
pub enum GksReference<'a> {
    /// Full operator algebra: traceless Gell-Mann basis.
    Identity,
    /// Image of a projection: the kernel of `choi(P₀)`.
    Projection(&'a KrausProjection),
}

/// Canonical decomposition of a generator.
#[derive(Debug, Clone)]
pub struct GksForm {
    /// Hermitian coefficient matrix over `basis`.
    pub gks_matrix: CMatrix,
    /// Operator basis indexing `gks_matrix`.
    pub basis: Vec<CMatrix>,
    /// Present for the `Identity` reference.
    pub effective_hamiltonian: Option<HermitianOperator>,
    /// `G` in `L(ρ) = −i[H,ρ] + {G,ρ} + Σ a_ij F_i ρ F_j†`; for trace
    /// preserving generators `G = −½ Σ a_ij F_j†F_i`.
    pub anticommutator_part: Option<HermitianOperator>,
    pub hermiticity_residual: f64,
}

impl GksForm {
    pub fn min_eigenvalue(&self) -> f64 {
        if self.gks_matrix.nrows() == 0 {
            return 0.0;
        }
        hermitian_eigen(&self.gks_matrix).0[0]
    }

    pub fn is_conditionally_cp(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// `−i[H,ρ] + {G,ρ} + Σ_ij a_ij F_i ρ F_j†`; `None` unless the reference
    /// is `Identity`.
    pub fn reconstruct(&self) -> Option<Superoperator> {
        let h = self.effective_hamiltonian.as_ref()?;
        let g = self.anticommutator_part.as_ref()?;
        let d = h.dim();
        let id = CMatrix::identity(d, d);
        let mut out = &crate::opcore::commutator_superop(h)
            + &(&Superoperator::sandwich(g.matrix(), &id) + &Superoperator::sandwich(&id, g.matrix()));
        for (i, fi) in self.basis.iter().enumerate() {
            for (j, fj) in self.basis.iter().enumerate() {
                let a = self.gks_matrix[(i, j)];
                if a == c(0.0) {
                    continue;
                }
                out = &out + &Superoperator::sandwich(fi, &fj.adjoint()).scale(a);
            }
        }
        Some(out)
    }
}

pub fn gks_canonical(l: &Superoperator, reference: GksReference<'_>) -> Result<GksForm> {
    let d = l.dim();
    let j = choi(l);
    let herm = j.hermiticity_residual();
    let scale = max_abs(j.matrix()).max(1.0);
    if herm > 1e-10 * scale {
        return Err(Error::NotHermiticityPreserving { residual: herm });
    }
    match reference {
        GksReference::Identity => {
            // Orthonormal basis F₀ = 1/√d, F_i Gell-Mann; L = Σ c_ij F_i·F_j†
            // with c_ij = Tr((F̄_j ⊗ F_i)† L).
            let mut full = vec![CMatrix::identity(d, d) / c((d as f64).sqrt())];
            full.extend(gell_mann_basis(d));
            let n = full.len();
            let lm = l.matrix();
            let coeff = CMatrix::from_fn(n, n, |a, b| {
                let basis = full[b].conjugate().kronecker(&full[a]);
                basis
                    .iter()
                    .zip(lm.iter())
                    .map(|(x, y)| x.conj() * y)
                    .sum()
            });
            let sqrt_d = (d as f64).sqrt();
            let mut f = CMatrix::identity(d, d) * (coeff[(0, 0)] / c(2.0 * d as f64));
            for (i, fi) in full.iter().enumerate().skip(1) {
                f += fi * (coeff[(i, 0)] / c(sqrt_d));
            }
            let h = (&f - f.adjoint()) * (I * 0.5);
            let g = (&f + f.adjoint()) * c(0.5);
            let gks = coeff.view((1, 1), (n - 1, n - 1)).into_owned();
            Ok(GksForm {
                gks_matrix: (&gks + gks.adjoint()) * c(0.5),
                basis: full.into_iter().skip(1).collect(),
                effective_hamiltonian: Some(HermitianOperator::hermitian_part(&h)),
                anticommutator_part: Some(HermitianOperator::hermitian_part(&g)),
                hermiticity_residual: herm,
            })
        }
        GksReference::Projection(p) => {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
            let kernel = choi_kernel(p);
            let jm = (j.matrix() + j.matrix().adjoint()) * c(0.5);
            let k = kernel.len();
            let w = CMatrix::from_fn(d * d, k, |r, col| kernel[col][r]);
            let gks = w.adjoint() * jm * &w;
            let basis = kernel
                .iter()
                .map(|v| crate::opcore::devectorize(v, d).expect("length d²"))
                .collect();
            Ok(GksForm {
                gks_matrix: (&gks + gks.adjoint()) * c(0.5),
                basis,
                effective_hamiltonian: None,
                anticommutator_part: None,
                hermiticity_residual: herm,
            })
        }
    }
}

/// Orthonormal basis of the orthogonal complement of `span{vec(V_α)}`.
fn choi_kernel(p: &KrausProjection) -> Vec<CVector> {
    let d = p.dim();
    let n = d * d;
    let mut range: Vec<CVector> = Vec::new();
    for v in p.kraus_ops() {
        let mut x = vectorize(&v).expect("square");
        orthogonalize(&mut x, &range);
        let norm = x.norm();
        if norm > 1e-10 {
            range.push(x / c(norm));
        }
    }
    let mut kernel: Vec<CVector> = Vec::new();
    for e in 0..n {
        let mut x = CVector::zeros(n);
        x[e] = c(1.0);
        orthogonalize(&mut x, &range);
        orthogonalize(&mut x, &kernel);
        let norm = x.norm();
        if norm > 1e-8 {
            kernel.push(x / c(norm));
        }
    }
    kernel
}

fn orthogonalize(x: &mut CVector, basis: &[CVector]) {
    for _ in 0..2 {
        for b in basis {
            let proj = b.dotc(x);
            *x -= b * proj;
        }
    }
}

/// Per-time verdict of a semigroup audit.
#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupEntry {
    pub time: f64,
    pub min_choi_eigenvalue: f64,
    pub trace_residual: f64,
    pub cp: bool,
    pub tp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupAudit {
    pub generator_min_eigenvalue: f64,
    pub generator_cp: bool,
    pub entries: Vec<SemigroupEntry>,
}

impl SemigroupAudit {
    pub fn pass(&self) -> bool {
        self.generator_cp && self.entries.iter().all(|e| e.cp && e.tp)
    }
}

/// CP/TP audit of `Φ_t = e^{tM}P₀` for a generator `M = P₀MP₀`.
///
/// `Φ_t` acts on the whole algebra by first projecting, so its Choi test on
/// the ambient space certifies complete positivity of the restriction to the
/// image.
pub fn cp_semigroup_audit(
    generator: &Superoperator,
    p: &KrausProjection,
    times: &[f64],
    eig_tol: f64,
    trace_tol: f64,
) -> Result<SemigroupAudit> {
    let gks = gks_canonical(generator, GksReference::Projection(p))?;
    let gmin = gks.min_eigenvalue();
    let p0 = p.superoperator();
    let entries = times
        .iter()
        .map(|&t| {
            let phi = &generator.exp(t) * &p0;
            let min = choi(&phi).min_eigenvalue();
            let tr = trace_preservation_residual(&phi);
            SemigroupEntry {
                time: t,
                min_choi_eigenvalue: min,
                trace_residual: tr,
                cp: min >= -eig_tol,
                tp: tr <= trace_tol,
            }
        })
        .collect();
    Ok(SemigroupAudit {
        generator_min_eigenvalue: gmin,
        generator_cp: gmin >= -eig_tol,
        entries,
    })
}
