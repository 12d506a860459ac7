use anyhow::{bail, Context};
use cpmarkov::models::{
    quasi_continuum, random_block_model, random_diagonal_model, random_entangling_model, random_model,
    random_partial_trace_model, Model,
};
use cpmarkov::projections::{
    block_diagonal_projection, check_dynamical_compatibility, check_no_first_order, custom_projection,
    diagonal_projection, entangling_projection, partial_trace_projection, EntanglingFamily, GateReport,
};
use cpmarkov::{DensityMatrix, HermitianOperator, ProjectionKind};

use crate::config::{ModelSpec, ProjectionSpec, ScenarioConfig, Tolerances};

fn hermitian(m: &cpmarkov::CMatrix, field: &str) -> anyhow::Result<HermitianOperator> {
    HermitianOperator::new(m.clone()).with_context(|| format!("{field} is not hermitian"))
}

fn random_with_dims(kind: ProjectionKind, seed: u64, dims: &[usize]) -> anyhow::Result<Model> {
    let need = |n: usize| -> anyhow::Result<()> {
        if dims.len() < n {
            bail!("model.dims needs at least {n} entries for {kind}");
        }
        Ok(())
    };
    Ok(match kind {
        ProjectionKind::Diagonal => {
            need(1)?;
            random_diagonal_model(seed, dims[0])?
        }
        ProjectionKind::BlockDiagonal => {
            need(2)?;
            random_block_model(seed, dims[0], dims[1])?
        }
        ProjectionKind::PartialTrace => {
            need(2)?;
            random_partial_trace_model(seed, dims[0], dims[1])?
        }
        ProjectionKind::Entangling => {
            need(2)?;
            random_entangling_model(seed, dims[0], &dims[1..])?
        }
        ProjectionKind::Custom => bail!("random models have no custom kind"),
    })
}

/// The model named by the config; `seed` overrides the configured one.
pub fn build_model(cfg: &ScenarioConfig, seed: Option<u64>) -> anyhow::Result<Model> {
    match &cfg.model {
        ModelSpec::QuasiContinuum(p) => {
            let mut params = *p;
            if let Some(s) = seed {
                params.seed = s;
            }
            Ok(quasi_continuum(&params)?)
        }
        ModelSpec::Random { seed: s, dims } => {
            let Some(ProjectionSpec::Kind(kind)) = &cfg.projection else {
                bail!("projection.kind is required for random models");
            };
            let s = seed.unwrap_or(*s);
            match dims {
                Some(d) => random_with_dims(*kind, s, d),
                None => Ok(random_model(*kind, s)?),
            }
        }
        ModelSpec::Explicit { h0, hp } => {
            let h0 = hermitian(h0, "model.h0")?;
            let hp = hermitian(hp, "model.hp")?;
            let p = match cfg.projection.as_ref().context("projection is missing")? {
                ProjectionSpec::PartialTrace { dim_a, dim_b, sigma } => {
                    let sigma = DensityMatrix::new(sigma.clone()).context("projection.sigma is not a density matrix")?;
                    partial_trace_projection(*dim_a, *dim_b, &sigma)?
                }
                ProjectionSpec::Diagonal { basis } => diagonal_projection(basis).context("projection.basis")?,
                ProjectionSpec::BlockDiagonal { blocks } => {
                    block_diagonal_projection(h0.dim(), blocks).context("projection.blocks")?
                }
                ProjectionSpec::Entangling { dim_a, c_ops, d_ops } => {
                    let fam = EntanglingFamily::new(c_ops.clone(), d_ops.clone()).context("projection family")?;
                    entangling_projection(&fam, *dim_a)?
                }
                ProjectionSpec::Custom { kraus } => custom_projection(kraus.clone()).context("projection.kraus")?,
                ProjectionSpec::Kind(_) => unreachable!("kind-only projections belong to random models"),
            };
            Ok(Model::new(h0, hp, p)?)
        }
    }
}

/// Dynamical compatibility and absence of first-order terms, tolerances
/// relative to the operator spread.
pub fn gate_reports(m: &Model, tol: &Tolerances) -> [GateReport; 2] {
    [
        check_dynamical_compatibility(&m.projection, &m.h0, tol.gate * (1.0 + m.h0.spectral_spread())),
        check_no_first_order(&m.projection, &m.hp, tol.gate * (1.0 + m.hp.spectral_spread())),
    ]
}

pub fn require_gates(m: &Model, tol: &Tolerances) -> anyhow::Result<[GateReport; 2]> {
    let reports = gate_reports(m, tol);
    for r in &reports {
        if !r.pass {
            bail!(
                "gate '{}' failed: residual {:.3e} exceeds {:.3e}",
                r.check,
                r.residual,
                r.tol
            );
        }
    }
    Ok(reports)
}
