//! Coupled block master equation for the quantum populations `ρ_α = V_αρV_α`.
//!
//! With `D_αβ = V_α L_T V_β` the block equation reads
//!
//! ```text
//! ∂ρ_α = −i[H_α, ρ_α] + λ²( −i[H2_α, ρ_α] − Σ_{β≠α} {D_βα† D_βα, ρ_α} + 2 Σ_{β≠α} D_αβ ρ_β D_αβ† )
//! ```
//!
//! which is `P₀(Z + λ²K̃_T)P₀` written block by block.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::{LindbladPieces, GATE_TOL};
use crate::opcore::{c, hermitian_eigen, hermiticity_residual, max_abs, CMatrix, CVector, HermitianOperator, C64, I};
use crate::projections::{check_dynamical_compatibility, check_no_first_order, KrausProjection};

/// Per-step tolerance of the adaptive integrator.
pub const ODE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationBlock {
    pub indices: Vec<usize>,
    pub rho: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumPopulations {
    pub blocks: Vec<PopulationBlock>,
    pub time: f64,
}

fn restrict(m: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn check_partition(blocks: &[Vec<usize>], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    for b in blocks {
        if b.is_empty() {
            return Err(Error::InvalidPartition {
                reason: "empty block".into(),
            });
        }
        for &i in b {
            if i >= d || seen[i] {
                return Err(Error::InvalidPartition {
                    reason: format!("index {i} out of range or repeated"),
                });
            }
            seen[i] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidPartition {
            reason: "blocks do not cover the dimension".into(),
        });
    }
    Ok(())
}

impl QuantumPopulations {
    /// `ρ_α = V_αρV_α` for each block.
    pub fn from_state(blocks: &[Vec<usize>], rho: &CMatrix, time: f64) -> Result<Self> {
        check_partition(blocks, rho.nrows())?;
        Ok(Self {
            blocks: blocks
                .iter()
                .map(|b| PopulationBlock {
                    indices: b.clone(),
                    rho: restrict(rho, b, b),
                })
                .collect(),
            time,
        })
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.indices.len()).sum()
    }

    /// The block-diagonal operator `Σ_α ρ_α`.
    pub fn assemble(&self) -> CMatrix {
        let d = self.dim();
        let mut m = CMatrix::zeros(d, d);
        for b in &self.blocks {
            for (i, &r) in b.indices.iter().enumerate() {
                for (j, &s) in b.indices.iter().enumerate() {
                    m[(r, s)] = b.rho[(i, j)];
                }
            }
        }
        m
    }

    pub fn traces(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.rho.trace().re).collect()
    }

    pub fn total_trace(&self) -> f64 {
        self.traces().iter().sum()
    }

    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| {
                let h = (&b.rho + b.rho.adjoint()) * c(0.5);
                hermitian_eigen(&h).0[0]
            })
            .collect()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| hermiticity_residual(&b.rho))
            .fold(0.0, f64::max)
    }

    /// Hermiticity, block positivity and unit global trace.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_residual();
        if herm > 1e-10 {
            return Err(Error::GateFailure {
                check: "block hermiticity",
                residual: herm,
                tol: 1e-10,
            });
        }
        let min = self.min_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < -1e-8 {
            return Err(Error::GateFailure {
                check: "block positivity",
                residual: -min,
                tol: 1e-8,
            });
        }
        let drift = (self.total_trace() - 1.0).abs();
        if drift > 1e-9 {
            return Err(Error::GateFailure {
                check: "global trace",
                residual: drift,
                tol: 1e-9,
            });
        }
        Ok(())
    }

    fn flatten(&self) -> CVector {
        CVector::from_iterator(
            self.blocks.iter().map(|b| b.rho.len()).sum(),
            self.blocks.iter().flat_map(|b| b.rho.iter().copied()),
        )
    }

    fn with_data(&self, v: &CVector, time: f64) -> Self {
        let mut off = 0;
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let n = b.indices.len();
                let rho = CMatrix::from_iterator(n, n, v.iter().skip(off).take(n * n).copied());
                off += n * n;
                PopulationBlock {
                    indices: b.indices.clone(),
                    rho,
                }
            })
            .collect();
        Self { blocks, time }
    }
}

/// Scattering operators `D_αβ` between blocks of a partition.
#[derive(Debug, Clone)]
pub struct ScatteringSet {
    pub t: f64,
    pub blocks: Vec<Vec<usize>>,
    /// `d[α][β]` is the `|α| × |β|` matrix `V_α L_T V_β`.
    pub d: Vec<Vec<CMatrix>>,
    /// `max_α |D_αα|`.
    pub diagonal_residual: f64,
}

impl ScatteringSet {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, alpha: usize, beta: usize) -> &CMatrix {
        &self.d[alpha][beta]
    }

    /// `Σ_{β≠α} D_βα† D_βα`.
    pub fn loss(&self, alpha: usize) -> CMatrix {
        let n = self.blocks[alpha].len();
        let mut g = CMatrix::zeros(n, n);
        for beta in 0..self.len() {
            if beta != alpha {
                let dba = &self.d[beta][alpha];
                g += dba.adjoint() * dba;
            }
        }
        g
    }
}

pub fn scattering_operators(blocks: &[Vec<usize>], l_t: &HermitianOperator) -> Result<ScatteringSet> {
    scattering_operators_at(blocks, l_t, f64::NAN)
}

fn scattering_operators_at(blocks: &[Vec<usize>], l_t: &HermitianOperator, t: f64) -> Result<ScatteringSet> {
    check_partition(blocks, l_t.dim())?;
    let l = l_t.matrix();
    let d: Vec<Vec<CMatrix>> = blocks
        .iter()
        .map(|a| blocks.iter().map(|b| restrict(l, a, b)).collect())
        .collect();
    let diagonal_residual = (0..blocks.len()).map(|a| max_abs(&d[a][a])).fold(0.0, f64::max);
    Ok(ScatteringSet {
        t,
        blocks: blocks.to_vec(),
        d,
        diagonal_residual,
    })
}

/// Diagonal blocks `V_α H V_α`.
pub fn diagonal_blocks(blocks: &[Vec<usize>], h: &HermitianOperator) -> Vec<CMatrix> {
    blocks.iter().map(|b| restrict(h.matrix(), b, b)).collect()
}

/// Effective non-hermitian block operators `H_α + λ²H2_α − iλ²Σ D†D`.
fn effective_blocks(scat: &ScatteringSet, h: &[CMatrix], h2: &[CMatrix], lambda: f64) -> Vec<CMatrix> {
    let l2 = lambda * lambda;
    (0..scat.len())
        .map(|a| &h[a] + &h2[a] * c(l2) - scat.loss(a) * (I * l2))
        .collect()
}

/// Largest step for which the explicit scheme stays stable on the block
/// equation, from a norm bound on its right-hand side.
fn stable_step(eff: &[CMatrix], scat: &ScatteringSet, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    let bound = (0..eff.len())
        .map(|a| {
            let n = eff[a].nrows();
            let mu = eff[a].trace().re / n as f64;
            let shifted = &eff[a] - CMatrix::identity(n, n) * c(mu);
            let gain: f64 = (0..scat.len())
                .filter(|&b| b != a)
                .map(|b| scat.get(a, b).norm_squared())
                .sum();
            2.0 * shifted.norm() + 2.0 * l2 * gain
        })
        .fold(0.0_f64, f64::max);
    if bound > 0.0 {
        1.5 / bound
    } else {
        f64::INFINITY
    }
}

fn check_shapes(pops: &QuantumPopulations, scat: &ScatteringSet, h: &[CMatrix], h2: &[CMatrix]) -> Result<()> {
    let n = scat.len();
    for got in [pops.blocks.len(), h.len(), h2.len()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    for a in 0..n {
        let m = scat.blocks[a].len();
        for got in [pops.blocks[a].rho.nrows(), h[a].nrows(), h2[a].nrows()] {
            if got != m {
                return Err(Error::DimensionMismatch { expected: m, got });
            }
        }
    }
    Ok(())
}

fn rhs_with(eff: &[CMatrix], scat: &ScatteringSet, lambda: f64, rho: &[&CMatrix]) -> Vec<CMatrix> {
    let gain = c(2.0 * lambda * lambda);
    (0..scat.len())
        .map(|a| {
            let k = &eff[a];
            let mut out = (k * rho[a] - rho[a] * k.adjoint()) * (-I);
            for (b, rb) in rho.iter().enumerate() {
                if b != a {
                    let dab = &scat.d[a][b];
                    out += dab * *rb * dab.adjoint() * gain;
                }
            }
            out
        })
        .collect()
}

/// Block derivatives of the populations.
pub fn qfgr_rhs(
    pops: &QuantumPopulations,
    scat: &ScatteringSet,
    h_blocks: &[CMatrix],
    h2_blocks: &[CMatrix],
    lambda: f64,
) -> Result<Vec<CMatrix>> {
    check_shapes(pops, scat, h_blocks, h2_blocks)?;
    let eff = effective_blocks(scat, h_blocks, h2_blocks, lambda);
    let rho: Vec<&CMatrix> = pops.blocks.iter().map(|b| &b.rho).collect();
    Ok(rhs_with(&eff, scat, lambda, &rho))
}

#[derive(Debug, Clone)]
pub struct QfgrTrajectory {
    pub samples: Vec<QuantumPopulations>,
    pub steps_taken: usize,
}

impl QfgrTrajectory {
    /// `max_t |Σ_α Tr ρ_α(t) − Σ_α Tr ρ_α(0)|`.
    pub fn trace_drift(&self) -> f64 {
        let t0 = self.samples[0].total_trace();
        self.samples
            .iter()
            .map(|s| (s.total_trace() - t0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_block_eigenvalue(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.min_eigenvalues())
            .fold(f64::INFINITY, f64::min)
    }
}

const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dormand–Prince 5(4) for the autonomous linear system `y' = f(y)`, sampled
/// at `grid` (sorted, starting at the initial time).
fn dopri5(
    f: impl Fn(&CVector) -> CVector,
    y0: CVector,
    grid: &[f64],
    tol: f64,
    h_max: f64,
) -> Result<(Vec<CVector>, usize)> {
    let mut out = vec![y0.clone()];
    let mut y = y0;
    let mut t = grid[0];
    let mut k1 = f(&y);
    let scale = |y: &CVector| y.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let (n0, n1) = (scale(&y), scale(&k1));
    let mut h = if n0 > 1e-5 && n1 > 1e-5 { 0.01 * n0 / n1 } else { 1e-6 };
    h = h.min(h_max);
    let mut steps = 0;
    for &target in &grid[1..] {
        while t < target {
            let last = h >= target - t;
            let hs = if last { target - t } else { h };
            if hs < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { time: t });
            }
            let mut k = vec![k1.clone()];
            for row in DP_A.iter() {
                let mut yi = y.clone();
                for (j, &a) in row.iter().enumerate().take(k.len()) {
                    if a != 0.0 {
                        yi.axpy(c(hs * a), &k[j], c(1.0));
                    }
                }
                k.push(f(&yi));
            }
            // the last stage is the fifth-order solution itself
            let mut ynew = y.clone();
            for (j, &a) in DP_A[5].iter().enumerate() {
                if a != 0.0 {
                    ynew.axpy(c(hs * a), &k[j], c(1.0));
                }
            }
            let mut err = 0.0_f64;
            for i in 0..y.len() {
                let e: C64 = (0..7).map(|j| k[j][i] * DP_E[j]).sum::<C64>() * hs;
                let sc = tol + tol * y[i].norm().max(ynew[i].norm());
                err = err.max(e.norm() / sc);
            }
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                y = ynew;
                k1 = k.swap_remove(6);
                steps += 1;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !(last && err <= 1.0) {
                h = (hs * fac).min(h_max);
            }
        }
        out.push(y.clone());
    }
    Ok((out, steps))
}

/// Integrates the block equation from `initial` over `t_grid`.
pub fn evolve_qfgr(
    initial: &QuantumPopulations,
    scat: &ScatteringSet,
    h_blocks: &[CMatrix],
    h2_blocks: &[CMatrix],
    lambda: f64,
    t_grid: &[f64],
) -> Result<QfgrTrajectory> {
    check_shapes(initial, scat, h_blocks, h2_blocks)?;
    if t_grid.is_empty() || t_grid[0] != 0.0 || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter {
            name: "t_grid",
            reason: "must be sorted and start at 0".into(),
        });
    }
    let eff = effective_blocks(scat, h_blocks, h2_blocks, lambda);
    let f = |v: &CVector| {
        let pops = initial.with_data(v, 0.0);
        let rho: Vec<&CMatrix> = pops.blocks.iter().map(|b| &b.rho).collect();
        let d = rhs_with(&eff, scat, lambda, &rho);
        CVector::from_iterator(v.len(), d.iter().flat_map(|m| m.iter().copied()))
    };
    let h_max = stable_step(&eff, scat, lambda);
    let (ys, steps_taken) = dopri5(f, initial.flatten(), t_grid, ODE_TOL, h_max)?;
    let samples = ys
        .iter()
        .zip(t_grid)
        .map(|(v, &t)| initial.with_data(v, initial.time + t))
        .collect();
    Ok(QfgrTrajectory { samples, steps_taken })
}

/// Block data for one `(λ, T)` point.
#[derive(Debug, Clone)]
pub struct QfgrSystem {
    pub lambda: f64,
    pub scattering: ScatteringSet,
    pub h_blocks: Vec<CMatrix>,
    pub h2_blocks: Vec<CMatrix>,
}

impl QfgrSystem {
    /// From a block-diagonal projection, after the two gates.
    pub fn build(
        p: &KrausProjection,
        h0: &HermitianOperator,
        hp: &HermitianOperator,
        lambda: f64,
        t: f64,
    ) -> Result<Self> {
        let blocks = p.blocks().ok_or_else(|| Error::InvalidParameter {
            name: "projection",
            reason: format!("block equation needs a block_diagonal projection, got {}", p.kind()),
        })?;
        check_dynamical_compatibility(p, h0, GATE_TOL * (1.0 + h0.spectral_spread())).into_result()?;
        check_no_first_order(p, hp, GATE_TOL * (1.0 + hp.spectral_spread())).into_result()?;
        let pieces = LindbladPieces::new(h0, hp, t)?;
        let scattering = scattering_operators_at(blocks, &pieces.l, t)?;
        Ok(Self {
            lambda,
            h_blocks: diagonal_blocks(blocks, h0),
            h2_blocks: diagonal_blocks(blocks, &pieces.h2),
            scattering,
        })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.scattering.blocks
    }

    pub fn rhs(&self, pops: &QuantumPopulations) -> Result<Vec<CMatrix>> {
        qfgr_rhs(pops, &self.scattering, &self.h_blocks, &self.h2_blocks, self.lambda)
    }

    pub fn evolve(&self, initial: &QuantumPopulations, t_grid: &[f64]) -> Result<QfgrTrajectory> {
        evolve_qfgr(initial, &self.scattering, &self.h_blocks, &self.h2_blocks, self.lambda, t_grid)
    }

    /// Matrix of the block equation on the stacked block entries.
    pub fn generator_matrix(&self) -> CMatrix {
        let sizes: Vec<usize> = self.blocks().iter().map(|b| b.len()).collect();
        let n: usize = sizes.iter().map(|s| s * s).sum();
        let eff = effective_blocks(&self.scattering, &self.h_blocks, &self.h2_blocks, self.lambda);
        let zeros: Vec<CMatrix> = sizes.iter().map(|&s| CMatrix::zeros(s, s)).collect();
        let mut g = CMatrix::zeros(n, n);
        let mut col = 0;
        for (a, &s) in sizes.iter().enumerate() {
            for k in 0..s * s {
                let mut unit = zeros[a].clone();
                unit[k] = c(1.0);
                let rho: Vec<&CMatrix> = (0..sizes.len())
                    .map(|b| if b == a { &unit } else { &zeros[b] })
                    .collect();
                let d = rhs_with(&eff, &self.scattering, self.lambda, &rho);
                for (r, v) in d.iter().flat_map(|m| m.iter()).enumerate() {
                    g[(r, col)] = *v;
                }
                col += 1;
            }
        }
        g
    }

    pub fn steady_state(&self) -> SteadyPoint {
        let g = self.generator_matrix();
        let svd = g.clone().svd(false, true);
        let sv = &svd.singular_values;
        let top = sv.max().max(f64::MIN_POSITIVE);
        let kernel_dim = sv.iter().filter(|&&s| s <= 1e-10 * top).count();
        let vt = svd.v_t.expect("requested");
        let imin = sv.imin();
        let v: CVector = vt.row(imin).adjoint();
        let template = QuantumPopulations {
            blocks: self
                .blocks()
                .iter()
                .map(|b| PopulationBlock {
                    indices: b.clone(),
                    rho: CMatrix::zeros(b.len(), b.len()),
                })
                .collect(),
            time: f64::INFINITY,
        };
        let mut pops = template.with_data(&v, f64::INFINITY);
        let tr: C64 = pops.blocks.iter().map(|b| b.rho.trace()).sum();
        for b in &mut pops.blocks {
            b.rho /= tr;
            b.rho = (&b.rho + b.rho.adjoint()) * c(0.5);
        }
        let residual = (&g * pops.flatten()).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        SteadyPoint {
            t: self.scattering.t,
            kernel_dim,
            state: (kernel_dim <= 1).then_some(pops),
            residual,
        }
    }
}

/// A fixed point of the block equation at one collision time.
#[derive(Debug, Clone)]
pub struct SteadyPoint {
    pub t: f64,
    pub kernel_dim: usize,
    /// `None` when the kernel is degenerate.
    pub state: Option<QuantumPopulations>,
    pub residual: f64,
}

impl SteadyPoint {
    pub fn is_unique(&self) -> bool {
        self.kernel_dim <= 1
    }

    pub fn into_result(self) -> Result<QuantumPopulations> {
        match self.state {
            Some(s) if self.kernel_dim <= 1 => Ok(s),
            _ => Err(Error::NonUniqueSteadyState {
                kernel_dim: self.kernel_dim,
            }),
        }
    }
}

/// Fixed points over a grid of collision times, evaluated in parallel.
pub fn steady_state_scan<F>(builder: F, t_grid: &[f64]) -> Result<Vec<SteadyPoint>>
where
    F: Fn(f64) -> Result<QfgrSystem> + Sync,
{
    t_grid
        .par_iter()
        .map(|&t| builder(t).map(|s| s.steady_state()))
        .collect()
}
