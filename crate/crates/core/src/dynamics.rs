//! Exact projected dynamics, Markovian semigroups and their comparison.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{build_generator, interaction_norm, GeneratorBundle};
use crate::opcore::{c, commutator_superop, unitary_propagator, HermitianOperator, Superoperator};
use crate::projections::KrausProjection;
use crate::reduced::{build_reduced_generator, reduced_sup_error, time_grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PropagatorKind {
    Exact,
    Semigroup,
}

/// Propagators sampled on a time grid.
#[derive(Debug, Clone)]
pub struct PropagatorGrid {
    pub times: Vec<f64>,
    pub propagators: Vec<Superoperator>,
    pub kind: PropagatorKind,
}

fn full_hamiltonian(h0: &HermitianOperator, hp: &HermitianOperator, lambda: f64) -> HermitianOperator {
    HermitianOperator::hermitian_part(&(h0.matrix() + hp.matrix() * c(lambda)))
}

fn check_model(p: &KrausProjection, h0: &HermitianOperator, hp: &HermitianOperator) -> Result<()> {
    for d in [h0.dim(), hp.dim()] {
        if d != p.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                got: d,
            });
        }
    }
    Ok(())
}

/// `W_t^λ = P₀ e^{(Z+λA)t} P₀` via the superoperator exponential.
pub fn exact_projected(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    lambda: f64,
    t: f64,
) -> Result<Superoperator> {
    check_model(p, h0, hp)?;
    let gen = &commutator_superop(h0) + &commutator_superop(hp).scale(c(lambda));
    let p0 = p.superoperator();
    Ok(&(&p0 * &gen.exp(t)) * &p0)
}

/// `W_t^λ` via conjugation with `e^{−iHt}`, `H = H₀ + λH'`.
pub fn exact_projected_conjugation(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    lambda: f64,
    t: f64,
) -> Result<Superoperator> {
    check_model(p, h0, hp)?;
    let u = unitary_propagator(&full_hamiltonian(h0, hp, lambda), t);
    let p0 = p.superoperator();
    Ok(&(&p0 * &u) * &p0)
}

pub fn exact_grid(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    lambda: f64,
    times: &[f64],
) -> Result<PropagatorGrid> {
    check_model(p, h0, hp)?;
    let h = full_hamiltonian(h0, hp, lambda);
    let p0 = p.superoperator();
    let propagators = times
        .iter()
        .map(|&t| &(&p0 * &unitary_propagator(&h, t)) * &p0)
        .collect();
    Ok(PropagatorGrid {
        times: times.to_vec(),
        propagators,
        kind: PropagatorKind::Exact,
    })
}

/// `Ŵ_t = e^{(Z₀+λ²K_T)t} P₀`.
pub fn markov_propagator(bundle: &GeneratorBundle, t: f64) -> Result<Superoperator> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: format!("must be non-negative, got {t}"),
        });
    }
    Ok(bundle.semigroup(t))
}

pub fn markov_grid(bundle: &GeneratorBundle, times: &[f64]) -> Result<PropagatorGrid> {
    let propagators = times
        .iter()
        .map(|&t| markov_propagator(bundle, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(PropagatorGrid {
        times: times.to_vec(),
        propagators,
        kind: PropagatorKind::Semigroup,
    })
}

/// Residual of the Nakajima–Zwanzig identity along a uniform grid.
#[derive(Debug, Clone, Serialize)]
pub struct NzResidual {
    pub step: f64,
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max: f64,
}

/// `max_t ‖W_t − U_tP₀ − λ² ∫₀^t ∫₀^s U_{t−s} A₀₁ U^λ_{s−u} A₁₀ W_u du ds‖`
/// with nested trapezoid rules on the grid `t_k = k·step`, `k ≤ n_steps`.
///
/// `U^λ` is generated by `Z + λA₁₁`. With `include_memory = false` the
/// double integral is dropped, which leaves a residual of order `λ²`.
pub fn nz_residual(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    lambda: f64,
    step: f64,
    n_steps: usize,
    include_memory: bool,
) -> Result<NzResidual> {
    check_model(p, h0, hp)?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter {
            name: "step",
            reason: format!("must be positive, got {step}"),
        });
    }
    let p0 = p.superoperator();
    let p1 = p.complement();
    let z = commutator_superop(h0);
    let a = commutator_superop(hp);
    let a01 = &(&p0 * &a) * &p1;
    let a10 = &(&p1 * &a) * &p0;
    let a11 = &(&p1 * &a) * &p1;

    let h = full_hamiltonian(h0, hp, lambda);
    let u_step = unitary_propagator(h0, step);
    let full_step = unitary_propagator(&h, step);
    let inner_step = (&z + &a11.scale(c(lambda))).exp(step);

    let n = n_steps + 1;
    let mut u = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut ul = Vec::with_capacity(n);
    let mut cur_u = Superoperator::identity(p.dim());
    let mut cur_full = Superoperator::identity(p.dim());
    let mut cur_l = Superoperator::identity(p.dim());
    for _ in 0..n {
        u.push(cur_u.clone());
        w.push(&(&p0 * &cur_full) * &p0);
        ul.push(cur_l.clone());
        cur_u = &u_step * &cur_u;
        cur_full = &full_step * &cur_full;
        cur_l = &inner_step * &cur_l;
    }

    // G_j = ∫₀^{s_j} U^λ_{s_j − u} A₁₀ W_u du, then F_j = A₀₁ G_j
    let a10w: Vec<Superoperator> = w.iter().map(|wk| &a10 * wk).collect();
    let f: Vec<Superoperator> = (0..n)
        .into_par_iter()
        .map(|j| &a01 * &trapezoid(j, step, |k| &ul[j - k] * &a10w[k]))
        .collect();

    let residuals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rhs = &u[i] * &p0;
            if include_memory {
                let mem = trapezoid(i, step, |j| &u[i - j] * &f[j]);
                rhs = &rhs + &mem.scale(c(lambda * lambda));
            }
            (&w[i] - &rhs).norm()
        })
        .collect();
    let max = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(NzResidual {
        step,
        times: (0..n).map(|k| k as f64 * step).collect(),
        residuals,
        max,
    })
}

/// Trapezoid rule `h(½f₀ + f₁ + … + ½f_m)`; zero for `m = 0`.
fn trapezoid(m: usize, h: f64, f: impl Fn(usize) -> Superoperator) -> Superoperator {
    let first = f(0);
    if m == 0 {
        return Superoperator::zeros(first.dim());
    }
    let mut acc = first.scale(c(0.5));
    for k in 1..m {
        acc = &acc + &f(k);
    }
    acc = &acc + &f(m).scale(c(0.5));
    acc.scale(c(h))
}

/// `max_t ‖W_t^λ − Ŵ_t^λ‖` on a uniform grid over `[0, λ^{−2}τ̄]`, using dense
/// superoperators.
pub fn sup_error(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    lambda: f64,
    bundle: &GeneratorBundle,
    tau_bar: f64,
    n_points: usize,
) -> Result<f64> {
    check_points(n_points)?;
    let grid = time_grid(lambda, tau_bar, n_points)?;
    let h = full_hamiltonian(h0, hp, lambda);
    let p0 = p.superoperator();
    let errs: Vec<f64> = grid
        .par_iter()
        .map(|&t| {
            let w = &(&p0 * &unitary_propagator(&h, t)) * &p0;
            (&w - &bundle.semigroup(t)).norm()
        })
        .collect();
    Ok(errs.into_iter().fold(0.0, f64::max))
}

fn check_points(n_points: usize) -> Result<()> {
    if n_points < 16 {
        return Err(Error::InvalidParameter {
            name: "n_points",
            reason: format!("need at least 16 grid points, got {n_points}"),
        });
    }
    Ok(())
}

/// Choice of the collision time in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CollisionTime {
    /// `T(λ) = T̃ |λ|^{−ξ}` with `T̃ = 1/‖A‖`; for `ξ = 1` this is `1/(|λ|‖A‖)`.
    Completed,
    /// `T(λ) = T̃ |λ|^{−ξ}`.
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub lambdas: Vec<f64>,
    pub xi: f64,
    pub t_tilde: f64,
    pub completed_collision_time: bool,
    pub tau_bar: f64,
    pub collision_times: Vec<f64>,
    pub t_grid_per_lambda: Vec<Vec<f64>>,
    pub sup_errors: Vec<f64>,
    pub monotone_decreasing: bool,
}

/// Ratio between successive errors required by the decrease flag.
pub const DECREASE_RATIO: f64 = 0.9;

#[allow(clippy::too_many_arguments)]
pub fn convergence_sweep(
    p: &KrausProjection,
    h0: &HermitianOperator,
    hp: &HermitianOperator,
    lambdas: &[f64],
    xi: f64,
    collision: CollisionTime,
    tau_bar: f64,
    n_points: usize,
) -> Result<ConvergenceReport> {
    check_points(n_points)?;
    if !(xi > 0.0 && xi < 2.0) {
        return Err(Error::InvalidParameter {
            name: "xi",
            reason: format!("must lie in (0,2), got {xi}"),
        });
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter {
            name: "lambdas",
            reason: "empty list".into(),
        });
    }
    for (k, &l) in lambdas.iter().enumerate() {
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::InvalidParameter {
                name: "lambdas",
                reason: format!("λ = {l} outside (0,1)"),
            });
        }
        if k > 0 && l >= lambdas[k - 1] {
            return Err(Error::InvalidParameter {
                name: "lambdas",
                reason: "must be strictly decreasing".into(),
            });
        }
    }
    let a_norm = interaction_norm(hp);
    let t_tilde = match collision {
        CollisionTime::Completed => {
            if a_norm == 0.0 {
                1.0
            } else {
                1.0 / a_norm
            }
        }
        CollisionTime::Fixed(t) => {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "t_tilde",
                    reason: format!("must be positive, got {t}"),
                });
            }
            t
        }
    };
    let dense = p.dim() <= crate::projections::MATRIX_CACHE_DIM;
    let results: Vec<Result<(f64, Vec<f64>, f64)>> = lambdas
        .par_iter()
        .map(|&lambda| {
            let t = t_tilde * lambda.powf(-xi);
            let grid = time_grid(lambda, tau_bar, n_points)?;
            let err = if dense {
                let bundle = build_generator(p, h0, hp, lambda, t)?;
                sup_error(p, h0, hp, lambda, &bundle, tau_bar, n_points)?
            } else {
                let bundle = build_reduced_generator(p, h0, hp, lambda, t)?;
                reduced_sup_error(h0, hp, &bundle, tau_bar, n_points)?.1
            };
            Ok((t, grid, err))
        })
        .collect();
    let mut collision_times = Vec::new();
    let mut grids = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        let (t, g, e) = r?;
        collision_times.push(t);
        grids.push(g);
        errors.push(e);
    }
    let monotone = errors
        .windows(2)
        .all(|w| w[1] <= DECREASE_RATIO * w[0] || (w[0] <= 1e-10 && w[1] <= 1e-10));
    Ok(ConvergenceReport {
        lambdas: lambdas.to_vec(),
        xi,
        t_tilde,
        completed_collision_time: matches!(collision, CollisionTime::Completed),
        tau_bar,
        collision_times,
        t_grid_per_lambda: grids,
        sup_errors: errors,
        monotone_decreasing: monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcore::{pauli_x, CMatrix};
    use crate::projections::partial_trace_projection;
    use crate::testutil::{random_density, random_hermitian, rng};
    use crate::DensityMatrix;

    fn qubit_pair(seed: u64) -> (KrausProjection, HermitianOperator, HermitianOperator) {
        let mut r = rng(seed);
        let ha = random_hermitian(&mut r, 2);
        let hb = HermitianOperator::from_diagonal(&[0.0, 1.1]);
        let id = HermitianOperator::identity(2);
        let h0 = HermitianOperator::new(ha.kron(&id).matrix() + id.kron(&hb).matrix()).unwrap();
        let sigma = DensityMatrix::gibbs(&hb, 1.0);
        let b = random_hermitian(&mut r, 2);
        let shift = (b.matrix() * sigma.matrix()).trace();
        let b0 = b.matrix() - CMatrix::identity(2, 2) * shift;
        let hp = HermitianOperator::hermitian_part(&pauli_x().kronecker(&b0));
        (partial_trace_projection(2, 2, &sigma).unwrap(), h0, hp)
    }

    #[test]
    fn exact_examples() {
        let (p, h0, hp) = qubit_pair(71);
        let w0 = exact_projected(&p, &h0, &hp, 0.2, 0.0).unwrap();
        assert!(w0.max_abs_diff(&p.superoperator()) < 1e-14);
        let a = exact_projected(&p, &h0, &hp, 0.2, 3.0).unwrap();
        let b = exact_projected_conjugation(&p, &h0, &hp, 0.2, 3.0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-9);
        let free = exact_projected(&p, &h0, &hp, 0.0, 1.7).unwrap();
        let expect = &unitary_propagator(&h0, 1.7) * &p.superoperator();
        assert!(free.max_abs_diff(&expect) < 1e-12);
        assert!(a.norm() <= p.superoperator().norm().powi(2) + 1e-9);
    }

    #[test]
    fn markov_examples() {
        let (p, h0, hp) = qubit_pair(72);
        let b = build_generator(&p, &h0, &hp, 0.3, 1.0).unwrap();
        assert!(markov_propagator(&b, 0.0).unwrap().max_abs_diff(&p.superoperator()) < 1e-14);
        let s = markov_propagator(&b, 0.8).unwrap();
        let t = markov_propagator(&b, 1.3).unwrap();
        let st = markov_propagator(&b, 2.1).unwrap();
        assert!((&s * &t).max_abs_diff(&st) < 1e-9);
        let mut r = rng(73);
        let rho = p.apply(random_density(&mut r, 4).matrix());
        let out = st.apply(&rho);
        assert!((out.trace() - rho.trace()).norm() < 1e-9);
        assert!(markov_propagator(&b, -1.0).is_err());
        let grid = markov_grid(&b, &[0.5, 1.0]).unwrap();
        assert_eq!(grid.kind, PropagatorKind::Semigroup);
        let ex = exact_grid(&p, &h0, &hp, 0.3, &[0.0]).unwrap();
        assert!(ex.propagators[0].max_abs_diff(&p.superoperator()) < 1e-14);
    }

    #[test]
    fn nz_free_is_exact() {
        let (p, h0, hp) = qubit_pair(74);
        let r = nz_residual(&p, &h0, &hp, 0.0, 0.05, 40, true).unwrap();
        assert!(r.max < 1e-10);
    }

    #[test]
    fn nz_ablation_has_power() {
        let (p, h0, hp) = qubit_pair(75);
        let with = nz_residual(&p, &h0, &hp, 0.3, 0.02, 100, true).unwrap();
        let without = nz_residual(&p, &h0, &hp, 0.3, 0.02, 100, false).unwrap();
        assert!(without.max > 100.0 * with.max, "{} vs {}", without.max, with.max);
    }

    #[test]
    fn sup_error_trivial_cases() {
        let (p, h0, hp) = qubit_pair(76);
        let b0 = build_generator(&p, &h0, &hp, 0.0, 1.0).unwrap();
        assert!(sup_error(&p, &h0, &hp, 0.0, &b0, 1.0, 16).unwrap() < 1e-10);
        let zero = HermitianOperator::zeros(4);
        let bz = build_generator(&p, &h0, &zero, 0.2, 1.0).unwrap();
        assert!(sup_error(&p, &h0, &zero, 0.2, &bz, 1.0, 16).unwrap() < 1e-10);
        assert!(sup_error(&p, &h0, &zero, 0.2, &bz, 1.0, 8).is_err());
    }

    #[test]
    fn sweep_validation_and_trivial_sweep() {
        let (p, h0, _) = qubit_pair(77);
        let zero = HermitianOperator::zeros(4);
        let rep = convergence_sweep(&p, &h0, &zero, &[0.4, 0.2], 1.0, CollisionTime::Fixed(1.0), 1.0, 16)
            .unwrap();
        assert!(rep.sup_errors.iter().all(|&e| e < 1e-10));
        assert!(rep.monotone_decreasing);
        assert!(convergence_sweep(&p, &h0, &zero, &[0.2, 0.4], 1.0, CollisionTime::Completed, 1.0, 16).is_err());
        assert!(convergence_sweep(&p, &h0, &zero, &[0.2], 2.5, CollisionTime::Completed, 1.0, 16).is_err());
        assert!(convergence_sweep(&p, &h0, &zero, &[1.2], 1.0, CollisionTime::Completed, 1.0, 16).is_err());
    }
}
