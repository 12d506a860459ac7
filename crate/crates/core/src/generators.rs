//! Markovian generators built from second-order perturbation theory.
//!
//! Everything is evaluated in closed form. Gaussian integrals over the full
//! line give `√π T e^{−ω²T²/4}`; half-line ones give
//! `T(√π/2 e^{−ν²T²/4} − i F(νT/2))` with `F` Dawson's integral.
//!
//! Conventions: `H'(t) = e^{−iH₀t} H' e^{iH₀t}`, `ω_mn = E_m − E_n` in the
//! eigenbasis of `H₀`, `A = −i[H',·]`, `A(t) = U_{−t} A U_t`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::opcore::{
    bohr_decompose, c, commutator, commutator_superop, default_cluster_tol,
    hermitian_eigen, BohrDecomposition, CMatrix, HermitianOperator, Superoperator, C64, I,
};
use crate::projections::{check_dynamical_compatibility, check_no_first_order, KrausProjection};
use crate::special::dawson;

/// Relative tolerance of the projection gates.
pub const GATE_TOL: f64 = 1e-9;

fn check_time(name: &'static str, t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {t}"),
        });
    }
    Ok(())
}

fn check_dims(h0: &HermitianOperator, hp: &HermitianOperator) -> Result<()> {
    if h0.dim() != hp.dim() {
        return Err(Error::DimensionMismatch {
            expected: h0.dim(),
            got: hp.dim(),
        });
    }
    Ok(())
}

/// `H'` in the eigenbasis of `H₀`, with the eigenvalues and eigenvectors.
fn eigen_coupling(h0: &HermitianOperator, hp: &HermitianOperator) -> (Vec<f64>, CMatrix, CMatrix) {
    let (e, v) = hermitian_eigen(h0.matrix());
    let h = v.adjoint() * hp.matrix() * &v;
    (e, v, h)
}

/// `ℒ_T = (2√π T)^{−1/2} ∫ e^{−t²/2T²} H'(t) dt`.
pub fn smoothed_interaction(
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    t: f64,
) -> Result<HermitianOperator> {
    check_time("T", t)?;
    check_dims(h0, hp)?;
    let (e, v, h) = eigen_coupling(h0, hp);
    let d = e.len();
    let pref = PI.powf(0.25) * t.sqrt();
    let l = CMatrix::from_fn(d, d, |m, n| {
        let w = e[m] - e[n];
        h[(m, n)] * (pref * (-w * w * t * t / 2.0).exp())
    });
    Ok(HermitianOperator::hermitian_part(&(&v * l * v.adjoint())))
}

/// `H_T^(2) = (i / 2√π T) ∬_{t₂<t₁} e^{−(t₁²+t₂²)/2T²} [H'(t₁), H'(t₂)]`.
pub fn second_order_hamiltonian(
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    t: f64,
) -> Result<HermitianOperator> {
    check_time("T", t)?;
    check_dims(h0, hp)?;
    let (e, v, h) = eigen_coupling(h0, hp);
    let d = e.len();
    let mut out = CMatrix::zeros(d, d);
    for m in 0..d {
        for n in 0..d {
            let wmn = e[m] - e[n];
            let env = 2.0 * t * (-wmn * wmn * t * t / 4.0).exp();
            if env == 0.0 {
                continue;
            }
            let mut acc = c(0.0);
            for k in 0..d {
                let hk = h[(m, k)] * h[(k, n)];
                if hk == c(0.0) {
                    continue;
                }
                let nu = (e[m] - e[k]) - (e[k] - e[n]);
                acc += hk * dawson(nu * t / 2.0);
            }
            out[(m, n)] = acc * env;
        }
    }
    Ok(HermitianOperator::hermitian_part(&(&v * out * v.adjoint())))
}

/// The two Lindblad pieces of `K̃_T`.
#[derive(Debug, Clone)]
pub struct LindbladPieces {
    pub t: f64,
    pub l: HermitianOperator,
    pub h2: HermitianOperator,
}

impl LindbladPieces {
    pub fn new(h0: &HermitianOperator, hp: &HermitianOperator, t: f64) -> Result<Self> {
        Ok(Self {
            t,
            l: smoothed_interaction(h0, hp, t)?,
            h2: second_order_hamiltonian(h0, hp, t)?,
        })
    }

    /// `K̃_T ρ = −i[H_T^(2), ρ] − [ℒ_T, [ℒ_T, ρ]]`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let l = self.l.matrix();
        commutator(self.h2.matrix(), rho) * (-I) - commutator(l, &commutator(l, rho))
    }

    /// The same generator with the sign of the dissipator flipped.
    pub fn apply_flipped(&self, rho: &CMatrix) -> CMatrix {
        let l = self.l.matrix();
        commutator(self.h2.matrix(), rho) * (-I) + commutator(l, &commutator(l, rho))
    }

    pub fn superoperator(&self) -> Superoperator {
        let d = self.l.dim();
        let l = self.l.matrix();
        let id = CMatrix::identity(d, d);
        let l2 = l * l;
        // −[L,[L,ρ]] = −L²ρ − ρL² + 2LρL
        let diss = &(&Superoperator::sandwich(l, l).scale(c(2.0))
            - &Superoperator::sandwich(&l2, &id))
            - &Superoperator::sandwich(&id, &l2);
        &commutator_superop(&self.h2) + &diss
    }
}

/// `K̃_T` assembled from its Lindblad pieces.
pub fn ktilde_t(h0: &HermitianOperator, hp: &HermitianOperator, t: f64) -> Result<Superoperator> {
    Ok(LindbladPieces::new(h0, hp, t)?.superoperator())
}

/// Weights of the double-time kernels, indexed by eigen-operator triples.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Kernel {
    /// `(1/√πT) ∬_{t₂<t₁} e^{−(t₁²+t₂²)/2T²} X(t₁) Y(t₂)`
    Full,
    /// `∫₀^∞ e^{−(x/2)²/T²} X(x/2) Y(−x/2) dx`
    Smoothed,
}

/// Assembles `Σ_q X_pq Y_qr w(ω_p, ω_q, ω_r)` in the eigen-operator basis.
fn kernel(x: &CMatrix, y: &CMatrix, freqs: &[f64], t: f64, kind: Kernel) -> CMatrix {
    let n = freqs.len();
    let sqrt_pi_half = PI.sqrt() / 2.0;
    CMatrix::from_fn(n, n, |p, r| {
        let delta = freqs[p] - freqs[r];
        let env = match kind {
            Kernel::Full => (-delta * delta * t * t / 4.0).exp(),
            Kernel::Smoothed => 1.0,
        };
        if env == 0.0 {
            return c(0.0);
        }
        let mut acc = c(0.0);
        for q in 0..n {
            let xy = x[(p, q)] * y[(q, r)];
            if xy == c(0.0) {
                continue;
            }
            let nu = freqs[p] + freqs[r] - 2.0 * freqs[q];
            let s = nu * t / 2.0;
            let w = C64::new(sqrt_pi_half * (-s * s).exp(), -dawson(s));
            acc += xy * w;
        }
        acc * (2.0 * t * env)
    })
}

fn bohr_for(h0: &HermitianOperator) -> Result<BohrDecomposition> {
    bohr_decompose(h0, default_cluster_tol(h0))
}

/// `K̃_T` from the double-time kernel with `A(t₁)A(t₂)`; the independent
/// second path to [`ktilde_t`].
pub fn ktilde_t_kernel(
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    t: f64,
) -> Result<Superoperator> {
    check_time("T", t)?;
    check_dims(h0, hp)?;
    let bohr = bohr_for(h0)?;
    let a = bohr.to_eigen(&commutator_superop(hp));
    let k = kernel(&a, &a, &bohr.pair_frequencies(), t, Kernel::Full);
    Ok(bohr.from_eigen(&k))
}

fn gates(p: &KrausProjection, h0: &HermitianOperator, hp: &HermitianOperator) -> Result<()> {
    let scale0 = 1.0 + h0.spectral_spread();
    check_dynamical_compatibility(p, h0, GATE_TOL * scale0).into_result()?;
    let scale1 = 1.0 + hp.spectral_spread();
    check_no_first_order(p, hp, GATE_TOL * scale1).into_result()?;
    Ok(())
}

/// `K_T = P₀ K̃_T P₀`, refusing when `[Z,P₀] ≠ 0` or `A₀₀ ≠ 0`.
pub fn k_t(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    t: f64,
) -> Result<Superoperator> {
    gates(p, h0, hp)?;
    let kt = ktilde_t(h0, hp, t)?;
    let p0 = p.superoperator();
    Ok(&(&p0 * &kt) * &p0)
}

/// `P₀AP₁` and `P₁AP₀` in the eigen-operator basis.
fn coupling_blocks(
    p: &KrausProjection,
    hp: &HermitianOperator,
    bohr: &BohrDecomposition,
) -> (CMatrix, CMatrix) {
    let p0 = p.superoperator();
    let p1 = p.complement();
    let a = commutator_superop(hp);
    let a01 = bohr.to_eigen(&(&(&p0 * &a) * &p1));
    let a10 = bohr.to_eigen(&(&(&p1 * &a) * &p0));
    (a01, a10)
}

/// `K_T` from the `A₀₁(t₁)A₁₀(t₂)` kernel.
pub fn k_t_coupling_form(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    t: f64,
) -> Result<Superoperator> {
    check_time("T", t)?;
    gates(p, h0, hp)?;
    let bohr = bohr_for(h0)?;
    let (a01, a10) = coupling_blocks(p, hp, &bohr);
    let k = kernel(&a01, &a10, &bohr.pair_frequencies(), t, Kernel::Full);
    Ok(bohr.from_eigen(&k))
}

/// `K^♮ = Σ_ω Q_ω K Q_ω`.
pub fn spectral_average(k: &Superoperator, bohr: &BohrDecomposition) -> Superoperator {
    let m = bohr.to_eigen(k);
    let masked = CMatrix::from_fn(m.nrows(), m.ncols(), |p, q| {
        if bohr.label(p) == bohr.label(q) {
            m[(p, q)]
        } else {
            c(0.0)
        }
    });
    bohr.from_eigen(&masked)
}

/// `(1/√πT) ∫ e^{−q²/T²} U_{−q} K U_q dq`.
pub fn gaussian_time_average(
    k: &Superoperator,
    h0: &HermitianOperator,
    t: f64,
) -> Result<Superoperator> {
    check_time("T", t)?;
    if k.dim() != h0.dim() {
        return Err(Error::DimensionMismatch {
            expected: h0.dim(),
            got: k.dim(),
        });
    }
    let bohr = bohr_for(h0)?;
    let w = bohr.pair_frequencies();
    let m = bohr.to_eigen(k);
    let damped = CMatrix::from_fn(m.nrows(), m.ncols(), |p, q| {
        let delta = w[p] - w[q];
        m[(p, q)] * (-delta * delta * t * t / 4.0).exp()
    });
    Ok(bohr.from_eigen(&damped))
}

/// Unprojected `K̃^T = ∫₀^∞ e^{−(x/2)²/T²} A(x/2) A(−x/2) dx`.
pub fn ktilde_r_smoothed(
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    t_damp: f64,
) -> Result<Superoperator> {
    check_time("T_damp", t_damp)?;
    check_dims(h0, hp)?;
    let bohr = bohr_for(h0)?;
    let a = bohr.to_eigen(&commutator_superop(hp));
    let k = kernel(&a, &a, &bohr.pair_frequencies(), t_damp, Kernel::Smoothed);
    Ok(bohr.from_eigen(&k))
}

/// `K^T = P₀ K̃^T P₀`, the smoothed stand-in for `K_R`.
pub fn k_r_smoothed(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    t_damp: f64,
) -> Result<Superoperator> {
    let kr = ktilde_r_smoothed(h0, hp, t_damp)?;
    let p0 = p.superoperator();
    Ok(&(&p0 * &kr) * &p0)
}

/// `K_D = ∫₀^∞ e^{−εx} U_{−x} A₀₁ U_x A₁₀ dx`, weight `1/(ε + iΔ)` per
/// Bohr component.
pub fn damped_davies(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    eps: f64,
) -> Result<Superoperator> {
    check_time("eps", eps)?;
    check_dims(h0, hp)?;
    let bohr = bohr_for(h0)?;
    let w = bohr.pair_frequencies();
    let (a01, a10) = coupling_blocks(p, hp, &bohr);
    let n = w.len();
    let scaled = CMatrix::from_fn(n, n, |pp, q| a01[(pp, q)] / C64::new(eps, w[pp] - w[q]));
    Ok(bohr.from_eigen(&(scaled * a10)))
}

/// `T(λ) = 1 / (|λ| ‖A‖)` for a given norm `‖A‖`.
pub fn collision_time_from_norm(lambda: f64, a_norm: f64) -> Result<f64> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: "collision time needs λ ≠ 0".into(),
        });
    }
    if !(a_norm > 0.0 && a_norm.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "A",
            reason: "collision time needs ‖A‖ > 0".into(),
        });
    }
    Ok(1.0 / (lambda.abs() * a_norm))
}

/// `T(λ) = 1 / (|λ| ‖A‖)` with `‖A‖` the superoperator spectral norm.
pub fn completed_collision_time(lambda: f64, a: &Superoperator) -> Result<f64> {
    collision_time_from_norm(lambda, a.norm())
}

/// `‖−i[H',·]‖`, equal to the spread of the spectrum of `H'`.
pub fn interaction_norm(hp: &HermitianOperator) -> f64 {
    hp.spectral_spread()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Provenance {
    pub method: &'static str,
    /// Relative accuracy of the special-function evaluations.
    pub special_function_rel_tol: f64,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            method: "closed form",
            special_function_rel_tol: 1e-14,
        }
    }
}

/// `𝕃_{λT} = Z₀ + λ² K_T` with its ingredients.
#[derive(Debug, Clone)]
pub struct GeneratorBundle {
    pub t: f64,
    pub lambda: f64,
    pub l_t: HermitianOperator,
    pub h2_t: HermitianOperator,
    pub ktilde_t: Superoperator,
    pub k_t: Superoperator,
    pub full_generator: Superoperator,
    pub projection: KrausProjection,
    pub provenance: Provenance,
}

impl GeneratorBundle {
    /// `H̃_{λT} = H₀ + λ² H_T^(2)`.
    pub fn effective_hamiltonian(&self, h0: &HermitianOperator) -> HermitianOperator {
        HermitianOperator::hermitian_part(&(h0.matrix() + self.h2_t.matrix() * c(self.lambda.powi(2))))
    }

    /// `e^{𝕃t} P₀`.
    pub fn semigroup(&self, time: f64) -> Superoperator {
        &self.full_generator.exp(time) * &self.projection.superoperator()
    }

    /// The bundle with the dissipator's sign flipped, a deliberately
    /// non-CP generator.
    pub fn with_flipped_dissipator(&self, h0: &HermitianOperator) -> GeneratorBundle {
        let pieces = LindbladPieces {
            t: self.t,
            l: self.l_t.clone(),
            h2: self.h2_t.clone(),
        };
        let flipped = Superoperator::from_fn(self.l_t.dim(), |x| pieces.apply_flipped(x));
        let p0 = self.projection.superoperator();
        let k = &(&p0 * &flipped) * &p0;
        let z0 = &commutator_superop(h0) * &p0;
        GeneratorBundle {
            ktilde_t: flipped,
            full_generator: &z0 + &k.scale(c(self.lambda.powi(2))),
            k_t: k,
            ..self.clone()
        }
    }
}

pub fn build_generator(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    lambda: f64,
    t: f64,
) -> Result<GeneratorBundle> {
    check_time("T", t)?;
    check_dims(h0, hp)?;
    if p.dim() != h0.dim() {
        return Err(Error::DimensionMismatch {
            expected: h0.dim(),
            got: p.dim(),
        });
    }
    gates(p, h0, hp)?;
    let pieces = LindbladPieces::new(h0, hp, t)?;
    let ktilde = pieces.superoperator();
    let p0 = p.superoperator();
    let k = &(&p0 * &ktilde) * &p0;
    let z0 = &commutator_superop(h0) * &p0;
    let full = &z0 + &k.scale(c(lambda * lambda));
    Ok(GeneratorBundle {
        t,
        lambda,
        l_t: pieces.l,
        h2_t: pieces.h2,
        ktilde_t: ktilde,
        k_t: k,
        full_generator: full,
        projection: p.clone(),
        provenance: Provenance::default(),
    })
}
