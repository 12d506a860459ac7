//! Seeded model families.
//!
//! Every model satisfies `[Z, P₀] = 0` by construction, and its coupling is
//! made free of first-order terms by `H' ↦ H' − P̃₀(H')`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::GATE_TOL;
use crate::opcore::{c, hermitian_eigen, CMatrix, DensityMatrix, HermitianOperator};
use crate::projections::{
    block_diagonal_projection, check_dynamical_compatibility, check_no_first_order,
    diagonal_projection, entangling_projection, partial_trace_projection, EntanglingFamily,
    GateReport, KrausProjection, ProjectionKind,
};
use crate::random::{random_density, random_hermitian, random_unitary, rng, uniform, ModelRng};

/// A Hamiltonian pair with its projection.
#[derive(Debug, Clone)]
pub struct Model {
    pub h0: HermitianOperator,
    pub hp: HermitianOperator,
    pub projection: KrausProjection,
}

impl Model {
    pub fn new(h0: HermitianOperator, hp: HermitianOperator, projection: KrausProjection) -> Result<Self> {
        for d in [h0.dim(), hp.dim()] {
            if d != projection.dim() {
                return Err(Error::DimensionMismatch {
                    expected: projection.dim(),
                    got: d,
                });
            }
        }
        Ok(Self { h0, hp, projection })
    }

    pub fn dim(&self) -> usize {
        self.projection.dim()
    }

    /// Dynamical compatibility and absence of first-order terms.
    pub fn gates(&self) -> [GateReport; 2] {
        [
            check_dynamical_compatibility(
                &self.projection,
                &self.h0,
                GATE_TOL * (1.0 + self.h0.spectral_spread()),
            ),
            check_no_first_order(
                &self.projection,
                &self.hp,
                GATE_TOL * (1.0 + self.hp.spectral_spread()),
            ),
        ]
    }

    pub fn check_gates(&self) -> Result<()> {
        for g in self.gates() {
            g.into_result()?;
        }
        Ok(())
    }
}

/// `H' − P̃₀(H')`, which has `P₀AP₀ = 0` for the built-in kinds.
pub fn remove_first_order(p: &KrausProjection, hp: &HermitianOperator) -> HermitianOperator {
    HermitianOperator::hermitian_part(&(hp.matrix() - p.apply_dual(hp.matrix())))
}

fn conjugated_diagonal(u: &CMatrix, e: &[f64]) -> CMatrix {
    let d = e.len();
    u * CMatrix::from_fn(d, d, |i, j| if i == j { c(e[i]) } else { c(0.0) }) * u.adjoint()
}

fn levels(r: &mut ModelRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| uniform(r, -1.0, 1.0)).collect()
}

fn sqrt_psd(m: &CMatrix) -> CMatrix {
    let (s, v) = hermitian_eigen(m);
    let d = s.len();
    &v * CMatrix::from_fn(d, d, |i, j| if i == j { c(s[i].max(0.0).sqrt()) } else { c(0.0) })
        * v.adjoint()
}

/// Dephasing in a random basis with `H₀` diagonal in that basis.
pub fn random_diagonal_model(seed: u64, d: usize) -> Result<Model> {
    let mut r = rng(seed);
    let u = random_unitary(&mut r, d);
    let h0 = HermitianOperator::hermitian_part(&conjugated_diagonal(&u, &levels(&mut r, d)));
    let p = diagonal_projection(&u)?;
    let hp = remove_first_order(&p, &random_hermitian(&mut r, d));
    Model::new(h0, hp, p)
}

/// Random partition of `0..d` into `n_blocks` non-empty blocks, `H₀`
/// block-diagonal.
pub fn random_block_model(seed: u64, d: usize, n_blocks: usize) -> Result<Model> {
    if n_blocks == 0 || n_blocks > d {
        return Err(Error::InvalidParameter {
            name: "n_blocks",
            reason: format!("need 1 ≤ n_blocks ≤ d, got {n_blocks}"),
        });
    }
    let mut r = rng(seed);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.shuffle(&mut r);
    let mut blocks: Vec<Vec<usize>> = idx[..n_blocks].iter().map(|&i| vec![i]).collect();
    for &i in &idx[n_blocks..] {
        let k = r.random_range(0..n_blocks);
        blocks[k].push(i);
    }
    let p = block_diagonal_projection(d, &blocks)?;
    let h0 = HermitianOperator::hermitian_part(&p.apply(random_hermitian(&mut r, d).matrix()));
    let hp = remove_first_order(&p, &random_hermitian(&mut r, d));
    Model::new(h0, hp, p)
}

/// `Tr_B(·) ⊗ σ` with `σ` a random function of a random bath Hamiltonian.
pub fn random_partial_trace_model(seed: u64, dim_a: usize, dim_b: usize) -> Result<Model> {
    let mut r = rng(seed);
    let ha = random_hermitian(&mut r, dim_a);
    let ub = random_unitary(&mut r, dim_b);
    let hb = HermitianOperator::hermitian_part(&conjugated_diagonal(&ub, &levels(&mut r, dim_b)));
    let beta = uniform(&mut r, 0.2, 2.0);
    let sigma = DensityMatrix::gibbs(&hb, beta);
    let h0 = local_hamiltonian(&ha, &hb);
    let p = partial_trace_projection(dim_a, dim_b, &sigma)?;
    let hp = remove_first_order(&p, &random_hermitian(&mut r, dim_a * dim_b));
    Model::new(h0, hp, p)
}

/// `H_A ⊗ 1 + 1 ⊗ H_B`.
pub fn local_hamiltonian(ha: &HermitianOperator, hb: &HermitianOperator) -> HermitianOperator {
    let ia = HermitianOperator::identity(ha.dim());
    let ib = HermitianOperator::identity(hb.dim());
    HermitianOperator::hermitian_part(&(ha.kron(&ib).matrix() + ia.kron(hb).matrix()))
}

/// A valid entangling family on a `dim_b`-level bath: `A_n` coordinate
/// projectors onto consecutive ranges of the given sizes, `B_n` random states
/// supported in those ranges, `D_n = U √B_n`, plus a bath Hamiltonian
/// commuting with every `A_n` and `B_n`.
pub fn random_entangling_family(
    r: &mut ModelRng,
    sizes: &[usize],
) -> Result<(EntanglingFamily, HermitianOperator)> {
    let db: usize = sizes.iter().sum();
    let u = random_unitary(r, db);
    let mut cs = Vec::new();
    let mut ds = Vec::new();
    let mut hb = CMatrix::zeros(db, db);
    let mut lo = 0;
    for &n in sizes {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "sizes",
                reason: "empty range".into(),
            });
        }
        let mut a = CMatrix::zeros(db, db);
        for i in lo..lo + n {
            a[(i, i)] = c(1.0);
        }
        let sub = random_density(r, n);
        let mut b = CMatrix::zeros(db, db);
        b.view_mut((lo, lo), (n, n)).copy_from(sub.matrix());
        // bath energies diagonal in the eigenbasis of B_n
        let (_, v) = hermitian_eigen(sub.matrix());
        let e: Vec<f64> = (0..n).map(|_| uniform(r, -1.0, 1.0)).collect();
        let block = conjugated_diagonal(&v, &e);
        hb.view_mut((lo, lo), (n, n)).copy_from(&block);
        ds.push(&u * sqrt_psd(&b));
        cs.push(a);
        lo += n;
    }
    let family = EntanglingFamily::new(cs, ds)?;
    Ok((family, HermitianOperator::hermitian_part(&hb)))
}

pub fn random_entangling_model(seed: u64, dim_a: usize, sizes: &[usize]) -> Result<Model> {
    let mut r = rng(seed);
    let (family, hb) = random_entangling_family(&mut r, sizes)?;
    let ha = random_hermitian(&mut r, dim_a);
    let h0 = local_hamiltonian(&ha, &hb);
    let p = entangling_projection(&family, dim_a)?;
    let hp = remove_first_order(&p, &random_hermitian(&mut r, h0.dim()));
    Model::new(h0, hp, p)
}

/// A seeded random model of the given kind with `d ≤ 8`; sizes vary with the
/// seed.
pub fn random_model(kind: ProjectionKind, seed: u64) -> Result<Model> {
    let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    match kind {
        ProjectionKind::Diagonal => random_diagonal_model(seed, r.random_range(2..=6)),
        ProjectionKind::BlockDiagonal => {
            let d = r.random_range(3..=7);
            let n = r.random_range(2..=d.min(4));
            random_block_model(seed, d, n)
        }
        ProjectionKind::PartialTrace => {
            let da = 2;
            let db = r.random_range(2..=4);
            random_partial_trace_model(seed, da, db)
        }
        ProjectionKind::Entangling => {
            let sizes: Vec<usize> = if r.random_bool(0.5) { vec![1, 2] } else { vec![2, 2] };
            random_entangling_model(seed, 2, &sizes)
        }
        ProjectionKind::Custom => Err(Error::InvalidParameter {
            name: "kind",
            reason: "no random family for custom projections".into(),
        }),
    }
}

/// Parameters of the spin-plus-quasi-continuum model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiContinuumParams {
    pub n_bath: usize,
    /// Bath levels are drawn uniformly from `[−width/2, width/2]`.
    pub width: f64,
    pub beta: f64,
    /// Qubit splitting; `H_A = Δ σ_z / 2`.
    pub delta: f64,
    pub seed: u64,
}

impl Default for QuasiContinuumParams {
    fn default() -> Self {
        Self {
            n_bath: 60,
            width: 6.0,
            beta: 1.0,
            delta: 1.0,
            seed: 2024,
        }
    }
}

/// Qubit ⊗ `N` bath levels, `σ` Gibbs, `H' = σ_x ⊗ B` with `Tr(Bσ) = 0` and
/// `‖H'‖ = 1`, projection `Tr_B(·) ⊗ σ`.
pub fn quasi_continuum(params: &QuasiContinuumParams) -> Result<Model> {
    if params.n_bath < 2 {
        return Err(Error::InvalidParameter {
            name: "n_bath",
            reason: format!("need at least 2 bath levels, got {}", params.n_bath),
        });
    }
    if !(params.width > 0.0) || !(params.beta >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "width",
            reason: "width must be positive and beta non-negative".into(),
        });
    }
    let mut r = rng(params.seed);
    let n = params.n_bath;
    let mut e: Vec<f64> = (0..n)
        .map(|_| uniform(&mut r, -params.width / 2.0, params.width / 2.0))
        .collect();
    e.sort_by(|a, b| a.total_cmp(b));
    let hb = HermitianOperator::from_diagonal(&e);
    let ha = HermitianOperator::from_diagonal(&[-params.delta / 2.0, params.delta / 2.0]);
    let sigma = DensityMatrix::gibbs(&hb, params.beta);
    let b = random_hermitian(&mut r, n);
    let shift = (b.matrix() * sigma.matrix()).trace();
    let b0 = b.matrix() - CMatrix::identity(n, n) * shift;
    let (ev, _) = hermitian_eigen(&b0);
    let norm = ev.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let b0 = b0 / c(norm);
    let sx = crate::opcore::pauli_x();
    let hp = HermitianOperator::hermitian_part(&sx.kronecker(&b0));
    let p = partial_trace_projection(2, n, &sigma)?;
    Model::new(local_hamiltonian(&ha, &hb), hp, p)
}
