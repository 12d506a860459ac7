//! Maps of the form `P₀ M P₀` in coordinates of the image of `P₀`.
//!
//! With `Q_i` an orthonormal basis of `P₀(𝓑)` and `S_i = P̃₀(Q_i)`, every
//! such map is `Q m S` with the `r × r` matrix `m_ij = ⟨S_i, M Q_j⟩`
//! (because `S Q = 1`), so composition and exponentials happen in `r`
//! dimensions instead of `d²`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::{collision_time_from_norm, interaction_norm, LindbladPieces, GATE_TOL};
use crate::opcore::{
    c, commutator, hermitian_eigen, hs_inner, CMatrix, CVector, HermitianOperator, Superoperator,
    I,
};
use crate::projections::{check_dynamical_compatibility, check_no_first_order, KrausProjection};

#[derive(Debug, Clone)]
pub struct ImageSpace {
    dim: usize,
    basis: Vec<CMatrix>,
    dual: Vec<CMatrix>,
    gram: CMatrix,
}

impl ImageSpace {
    pub fn new(p: &KrausProjection) -> Self {
        let mut basis: Vec<CMatrix> = Vec::new();
        for x in p.image_spanning_set() {
            let scale = x.norm();
            if scale == 0.0 {
                continue;
            }
            let mut y = x;
            for _ in 0..2 {
                for q in &basis {
                    let proj = hs_inner(q, &y);
                    y -= q * proj;
                }
            }
            let n = y.norm();
            if n > 1e-10 * scale {
                basis.push(y / c(n));
            }
        }
        let dual: Vec<CMatrix> = basis.iter().map(|q| p.apply_dual(q)).collect();
        let r = basis.len();
        let gram = CMatrix::from_fn(r, r, |i, j| hs_inner(&dual[i], &dual[j]));
        Self {
            dim: p.dim(),
            basis,
            dual,
            gram,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn dual(&self) -> &[CMatrix] {
        &self.dual
    }

    pub fn gram(&self) -> &CMatrix {
        &self.gram
    }

    /// Coordinates of `P₀x`.
    pub fn coords(&self, x: &CMatrix) -> CVector {
        CVector::from_iterator(self.rank(), self.dual.iter().map(|s| hs_inner(s, x)))
    }

    pub fn embed(&self, v: &CVector) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (q, &a) in self.basis.iter().zip(v.iter()) {
            out += q * a;
        }
        out
    }

    /// `m_ij = ⟨S_i, f(Q_j)⟩`.
    pub fn reduce<F>(&self, f: F) -> CMatrix
    where
        F: Fn(&CMatrix) -> CMatrix + Sync,
    {
        let cols: Vec<CVector> = self
            .basis
            .par_iter()
            .map(|q| self.coords(&f(q)))
            .collect();
        let r = self.rank();
        CMatrix::from_fn(r, r, |i, j| cols[j][i])
    }

    pub fn reduce_superop(&self, s: &Superoperator) -> CMatrix {
        self.reduce(|x| s.apply(x))
    }

    /// `Q m S` as a dense superoperator.
    pub fn lift(&self, m: &CMatrix) -> Superoperator {
        Superoperator::from_fn(self.dim, |x| self.embed(&(m * self.coords(x))))
    }

    /// Operator norm of `Q m S`: `√λ_max(m G m†)`.
    pub fn norm(&self, m: &CMatrix) -> f64 {
        let a = m * &self.gram * m.adjoint();
        let ev = hermitian_eigen(&a).0;
        ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    /// `S e^{t(Z+λA)} Q`, evaluated from the eigenbasis of `H = H₀ + λH'`.
    pub fn exact_propagator(&self, h: &HermitianOperator) -> ExactReduced {
        let (e, v) = hermitian_eigen(h.matrix());
        let qh: Vec<CMatrix> = self.basis.iter().map(|q| v.adjoint() * q * &v).collect();
        let sh: Vec<CMatrix> = self.dual.iter().map(|s| v.adjoint() * s * &v).collect();
        let r = self.rank();
        let mut overlaps = Vec::with_capacity(r * r);
        for q in &qh {
            for s in &sh {
                overlaps.push(s.conjugate().component_mul(q));
            }
        }
        ExactReduced {
            rank: r,
            energies: e,
            overlaps,
        }
    }
}

/// Reduced exact propagator `w(t) = S e^{t(Z+λA)} Q`.
#[derive(Debug, Clone)]
pub struct ExactReduced {
    rank: usize,
    energies: Vec<f64>,
    overlaps: Vec<CMatrix>,
}

impl ExactReduced {
    pub fn at(&self, t: f64) -> CMatrix {
        let d = self.energies.len();
        let phase = CMatrix::from_fn(d, d, |a, b| {
            let x = -(self.energies[a] - self.energies[b]) * t;
            crate::opcore::C64::new(x.cos(), x.sin())
        });
        let r = self.rank;
        CMatrix::from_fn(r, r, |i, j| {
            self.overlaps[i + j * r]
                .iter()
                .zip(phase.iter())
                .map(|(a, b)| a * b)
                .sum()
        })
    }
}

/// Generator `Z₀ + λ²K_T` in image coordinates, for dimensions where the
/// dense superoperators are out of reach.
#[derive(Debug, Clone)]
pub struct ReducedBundle {
    pub t: f64,
    pub lambda: f64,
    pub pieces: LindbladPieces,
    pub space: ImageSpace,
    /// `S Z Q`.
    pub z: CMatrix,
    /// `S K̃_T Q`, i.e. the coordinates of `K_T`.
    pub k: CMatrix,
}

impl ReducedBundle {
    pub fn generator(&self) -> CMatrix {
        &self.z + &self.k * c(self.lambda * self.lambda)
    }

    /// Coordinates of `e^{𝕃t}P₀`.
    pub fn propagator(&self, time: f64) -> CMatrix {
        (self.generator() * c(time)).exp()
    }
}

pub fn build_reduced_generator(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    lambda: f64,
    t: f64,
) -> Result<ReducedBundle> {
    if p.dim() != h0.dim() || h0.dim() != hp.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: h0.dim().max(hp.dim()),
        });
    }
    check_dynamical_compatibility(p, h0, GATE_TOL * (1.0 + h0.spectral_spread())).into_result()?;
    check_no_first_order(p, hp, GATE_TOL * (1.0 + hp.spectral_spread())).into_result()?;
    let pieces = LindbladPieces::new(h0, hp, t)?;
    let space = ImageSpace::new(p);
    let h = h0.matrix();
    let z = space.reduce(|x| commutator(h, x) * (-I));
    let k = space.reduce(|x| pieces.apply(x));
    Ok(ReducedBundle {
        t,
        lambda,
        pieces,
        space,
        z,
        k,
    })
}

/// `max_t ‖W_t^λ − Ŵ_t^λ‖` over `n_points` uniform times in `[0, λ^{−2}τ̄]`.
pub fn reduced_sup_error(
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    bundle: &ReducedBundle,
    tau_bar: f64,
    n_points: usize,
) -> Result<(Vec<f64>, f64)> {
    let grid = time_grid(bundle.lambda, tau_bar, n_points)?;
    let lambda = bundle.lambda;
    let h = HermitianOperator::hermitian_part(&(h0.matrix() + hp.matrix() * c(lambda)));
    let exact = bundle.space.exact_propagator(&h);
    let gen = bundle.generator();
    let errors: Vec<f64> = grid
        .par_iter()
        .map(|&t| {
            let w = exact.at(t);
            let what = (&gen * c(t)).exp();
            bundle.space.norm(&(w - what))
        })
        .collect();
    let sup = errors.iter().cloned().fold(0.0, f64::max);
    Ok((grid, sup))
}

/// Uniform grid on `[0, λ^{−2}τ̄]` with both endpoints.
pub fn time_grid(lambda: f64, tau_bar: f64, n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::InvalidParameter {
            name: "n_points",
            reason: format!("need at least 2 points, got {n_points}"),
        });
    }
    if !(tau_bar > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau_bar",
            reason: format!("must be positive, got {tau_bar}"),
        });
    }
    let t_end = if lambda == 0.0 {
        tau_bar
    } else {
        tau_bar / (lambda * lambda)
    };
    let mut grid: Vec<f64> = (0..n_points)
        .map(|k| t_end * k as f64 / (n_points - 1) as f64)
        .collect();
    grid[n_points - 1] = t_end;
    Ok(grid)
}

/// `T(λ) = 1/(|λ|‖A‖)` with `‖A‖` taken from `H'`.
pub fn collision_time(lambda: f64, hp: &HermitianOperator) -> Result<f64> {
    collision_time_from_norm(lambda, interaction_norm(hp))
}
