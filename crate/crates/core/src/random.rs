//! Seeded random model ingredients.
//!
//! All randomness in the crate flows through [`ModelRng`], a ChaCha8 stream
//! cipher generator: its output for a given seed is fixed across platforms
//! and releases of `rand_chacha`, which keeps runs bit-reproducible.

use nalgebra::linalg::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::opcore::{c, CMatrix, DensityMatrix, HermitianOperator, C64};

pub type ModelRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ModelRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_complex<R: Rng>(r: &mut R) -> C64 {
    let re: f64 = r.sample(StandardNormal);
    let im: f64 = r.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Ginibre matrix with unit-variance complex gaussian entries.
pub fn random_matrix<R: Rng>(r: &mut R, d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    // fill column-major explicitly so the stream order is documented
    for j in 0..d {
        for i in 0..d {
            m[(i, j)] = gaussian_complex(r);
        }
    }
    m
}

/// GUE-like hermitian matrix `(G + G†)/2`.
pub fn random_hermitian<R: Rng>(r: &mut R, d: usize) -> HermitianOperator {
    HermitianOperator::hermitian_part(&random_matrix(r, d))
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase fix.
pub fn random_unitary<R: Rng>(r: &mut R, d: usize) -> CMatrix {
    let g = random_matrix(r, d);
    let qr = QR::new(g);
    let q = qr.q();
    let rr = qr.r();
    let mut u = q.clone();
    for j in 0..d {
        let z = rr[(j, j)];
        let phase = if z.norm() > 0.0 { z / z.norm() } else { c(1.0) };
        for i in 0..d {
            u[(i, j)] = q[(i, j)] * phase;
        }
    }
    u
}

/// Random full-rank density matrix `G G† / Tr(G G†)`.
pub fn random_density<R: Rng>(r: &mut R, d: usize) -> DensityMatrix {
    let g = random_matrix(r, d);
    let m = &g * g.adjoint();
    let tr = m.trace();
    let m = m / tr;
    DensityMatrix::new((&m + m.adjoint()) * c(0.5)).expect("Wishart sample is a state")
}

/// Uniform sample on `[lo, hi)`.
pub fn uniform<R: Rng>(r: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}
