use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use cpmarkov::dynamics::{convergence_sweep, nz_residual, CollisionTime};
use cpmarkov::generators::{build_generator, LindbladPieces, Provenance};
use cpmarkov::models::Model;
use cpmarkov::positivity::cp_semigroup_audit;
use cpmarkov::projections::{projection_audit, Verdict};
use cpmarkov::qfgr::{steady_state_scan, QfgrSystem, QuantumPopulations, ODE_TOL};
use cpmarkov::{CMatrix, DensityMatrix};
use serde_json::{json, Map, Value};

use crate::config::{ExperimentKind, ScenarioConfig, TTilde, Tolerances};
use crate::model::{build_model, require_gates};

/// Largest dimension for which dense superoperators are assembled.
const DENSE_DIM: usize = 16;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_AUDIT_FAIL: i32 = 2;

/// A CSV table held in memory until the run ends.
pub struct Table {
    pub file: &'static str,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &'static str, header: &'static [&'static str]) -> Self {
        Self {
            file,
            header,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(self.file);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(path)
    }
}

/// A finite number rendered for output; NaN and infinities are errors.
fn num(x: f64) -> anyhow::Result<String> {
    if !x.is_finite() {
        bail!("non-finite value {x} in results");
    }
    let a = x.abs();
    Ok(if a == 0.0 || (1e-4..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    })
}

pub struct AuditLine {
    pub check: String,
    pub residual: f64,
    pub tol: f64,
    pub verdict: Verdict,
}

impl AuditLine {
    fn at_most(check: String, residual: f64, tol: f64) -> Self {
        let verdict = if residual <= tol { Verdict::Pass } else { Verdict::Fail };
        Self {
            check,
            residual,
            tol,
            verdict,
        }
    }

    fn flag(check: String, ok: bool) -> Self {
        Self {
            check,
            residual: if ok { 0.0 } else { 1.0 },
            tol: 0.0,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        }
    }
}

struct Run<'a> {
    cfg: &'a ScenarioConfig,
    seed: Option<u64>,
    tol: Tolerances,
    tables: Vec<Table>,
    audits: Vec<AuditLine>,
    extra: Map<String, Value>,
}

pub struct Options {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub tol_scale: f64,
}

fn model_summary(m: &Model) -> Value {
    json!({
        "dim": m.dim(),
        "projection": m.projection.kind().to_string(),
        "h0_spread": m.h0.spectral_spread(),
        "hp_spread": m.hp.spectral_spread(),
    })
}

impl Run<'_> {
    fn model(&mut self) -> anyhow::Result<Model> {
        let m = build_model(self.cfg, self.seed)?;
        let gates = require_gates(&m, &self.tol)?;
        self.extra.insert("model".into(), model_summary(&m));
        self.extra.insert(
            "gates".into(),
            Value::Array(
                gates
                    .iter()
                    .map(|g| json!({"check": g.check, "residual": g.residual, "tol": g.tol}))
                    .collect(),
            ),
        );
        Ok(m)
    }

    fn audit_table(&mut self) -> anyhow::Result<()> {
        let mut t = Table::new("audit.csv", &["check", "residual", "verdict"]);
        for a in &self.audits {
            t.push(vec![a.check.clone(), num(a.residual)?, a.verdict.to_string()]);
        }
        self.tables.push(t);
        Ok(())
    }

    fn audit(&mut self) -> anyhow::Result<()> {
        let m = self.model()?;
        for e in projection_audit(&m.projection).entries {
            self.audits.push(AuditLine {
                check: format!("projection {}", e.check),
                residual: e.residual,
                tol: f64::NAN,
                verdict: e.verdict,
            });
        }
        if m.dim() > DENSE_DIM {
            bail!("generator audits need d <= {DENSE_DIM}, got {}", m.dim());
        }
        let e = &self.cfg.experiment;
        for &lambda in &e.lambdas {
            for &t in &e.collision_times {
                let mut b = build_generator(&m.projection, &m.h0, &m.hp, lambda, t)?;
                if e.corrupt_dissipator {
                    b = b.with_flipped_dissipator(&m.h0);
                }
                let a = cp_semigroup_audit(&b.full_generator, &m.projection, &e.times, self.tol.eig, self.tol.trace)?;
                let tag = format!("lambda={lambda} T={t}");
                self.audits.push(AuditLine::at_most(
                    format!("generator conditional CP {tag}"),
                    (-a.generator_min_eigenvalue).max(0.0),
                    self.tol.eig,
                ));
                for s in &a.entries {
                    self.audits.push(AuditLine::at_most(
                        format!("semigroup CP {tag} t={}", s.time),
                        (-s.min_choi_eigenvalue).max(0.0),
                        self.tol.eig,
                    ));
                    self.audits.push(AuditLine::at_most(
                        format!("semigroup trace preservation {tag} t={}", s.time),
                        s.trace_residual,
                        self.tol.trace,
                    ));
                }
            }
        }
        self.audit_table()
    }

    fn generator(&mut self) -> anyhow::Result<()> {
        let m = self.model()?;
        let e = &self.cfg.experiment;
        let mut table = Table::new("generator.csv", &["lambda", "T", "operator", "row", "col", "re", "im"]);
        let mut mins = Vec::new();
        for &lambda in &e.lambdas {
            for &t in &e.collision_times {
                let pieces = LindbladPieces::new(&m.h0, &m.hp, t)?;
                let ops: [(&str, &CMatrix); 2] = [("L_T", pieces.l.matrix()), ("H2_T", pieces.h2.matrix())];
                for (name, op) in ops {
                    for i in 0..op.nrows() {
                        for j in 0..op.ncols() {
                            table.push(vec![
                                num(lambda)?,
                                num(t)?,
                                name.to_string(),
                                i.to_string(),
                                j.to_string(),
                                num(op[(i, j)].re)?,
                                num(op[(i, j)].im)?,
                            ]);
                        }
                    }
                }
                if m.dim() <= DENSE_DIM {
                    let b = build_generator(&m.projection, &m.h0, &m.hp, lambda, t)?;
                    let a = cp_semigroup_audit(&b.full_generator, &m.projection, &[], self.tol.eig, self.tol.trace)?;
                    mins.push(json!({"lambda": lambda, "T": t, "gks_min_eigenvalue": a.generator_min_eigenvalue}));
                    self.audits.push(AuditLine::at_most(
                        format!("generator conditional CP lambda={lambda} T={t}"),
                        (-a.generator_min_eigenvalue).max(0.0),
                        self.tol.eig,
                    ));
                }
            }
        }
        self.extra.insert("generators".into(), Value::Array(mins));
        self.extra
            .insert("provenance".into(), serde_json::to_value(Provenance::default())?);
        self.tables.push(table);
        Ok(())
    }

    fn nz(&mut self) -> anyhow::Result<()> {
        let m = self.model()?;
        let e = &self.cfg.experiment;
        let lambda = e.lambdas[0];
        let mut table = Table::new("nz.csv", &["step", "residual"]);
        let mut res = Vec::new();
        for &step in &e.steps {
            let n = (e.t_max / step).round().max(1.0) as usize;
            let r = nz_residual(&m.projection, &m.h0, &m.hp, lambda, step, n, true)?;
            table.push(vec![num(step)?, num(r.max)?]);
            self.audits
                .push(AuditLine::at_most(format!("nz residual step={step}"), r.max, self.tol.nz));
            res.push(r.max);
        }
        self.extra.insert("lambda".into(), json!(lambda));
        self.extra.insert("t_max".into(), json!(e.t_max));
        self.extra.insert(
            "step_ratios".into(),
            json!(res.windows(2).map(|w| w[0] / w[1]).collect::<Vec<_>>()),
        );
        self.tables.push(table);
        Ok(())
    }

    fn sweep(&mut self) -> anyhow::Result<()> {
        let m = self.model()?;
        let e = &self.cfg.experiment;
        let collision = match e.t_tilde {
            TTilde::Completed => CollisionTime::Completed,
            TTilde::Fixed(x) => CollisionTime::Fixed(x),
        };
        let rep = convergence_sweep(&m.projection, &m.h0, &m.hp, &e.lambdas, e.xi, collision, e.tau_bar, e.n_points)?;
        let mut table = Table::new("sweep.csv", &["lambda", "T", "tau_bar", "sup_error"]);
        for k in 0..rep.lambdas.len() {
            table.push(vec![
                num(rep.lambdas[k])?,
                num(rep.collision_times[k])?,
                num(rep.tau_bar)?,
                num(rep.sup_errors[k])?,
            ]);
        }
        self.tables.push(table);
        self.audits
            .push(AuditLine::flag("sweep errors decreasing".into(), rep.monotone_decreasing));
        self.extra.insert("xi".into(), json!(rep.xi));
        self.extra.insert("t_tilde".into(), json!(rep.t_tilde));
        self.extra
            .insert("completed_collision_time".into(), json!(rep.completed_collision_time));
        self.extra.insert("monotone_decreasing".into(), json!(rep.monotone_decreasing));
        Ok(())
    }

    fn qfgr_initial(&self, m: &Model, s: &QfgrSystem) -> anyhow::Result<QuantumPopulations> {
        let rho = match &self.cfg.experiment.initial_state {
            Some(r) => {
                if r.nrows() != m.dim() {
                    bail!("experiment.initial_state has dimension {}, model has {}", r.nrows(), m.dim());
                }
                DensityMatrix::new(r.clone()).context("experiment.initial_state is not a density matrix")?
            }
            None => {
                let first = s.blocks()[0][0];
                let mut r = CMatrix::zeros(m.dim(), m.dim());
                r[(first, first)] = cpmarkov::opcore::c(1.0);
                DensityMatrix::new(r)?
            }
        };
        Ok(QuantumPopulations::from_state(s.blocks(), rho.matrix(), 0.0)?)
    }

    fn qfgr(&mut self) -> anyhow::Result<()> {
        let m = self.model()?;
        let e = &self.cfg.experiment;
        let (lambda, t) = (e.lambdas[0], e.collision_times[0]);
        let s = QfgrSystem::build(&m.projection, &m.h0, &m.hp, lambda, t)?;
        let p0 = self.qfgr_initial(&m, &s)?;
        let mut grid = e.times.clone();
        if grid.first() != Some(&0.0) {
            grid.insert(0, 0.0);
        }
        let traj = s.evolve(&p0, &grid)?;
        let mut table = Table::new("qfgr.csv", &["time", "block", "trace", "min_eig"]);
        for sample in &traj.samples {
            for (k, (tr, me)) in sample.traces().into_iter().zip(sample.min_eigenvalues()).enumerate() {
                table.push(vec![num(sample.time)?, k.to_string(), num(tr)?, num(me)?]);
            }
        }
        self.tables.push(table);
        let tol = self.tol.eig;
        self.audits
            .push(AuditLine::at_most("global trace drift".into(), traj.trace_drift(), tol));
        self.audits.push(AuditLine::at_most(
            "block positivity".into(),
            (-traj.min_block_eigenvalue()).max(0.0),
            tol,
        ));
        self.audits.push(AuditLine::at_most(
            "diagonal scattering D_aa".into(),
            s.scattering.diagonal_residual,
            self.tol.gate * 0.1,
        ));
        self.extra.insert("lambda".into(), json!(lambda));
        self.extra.insert("T".into(), json!(t));
        self.extra.insert("ode_steps".into(), json!(traj.steps_taken));
        Ok(())
    }

    fn steady(&mut self) -> anyhow::Result<()> {
        let m = self.model()?;
        let e = &self.cfg.experiment;
        let lambda = e.lambdas[0];
        let points = steady_state_scan(
            |t| QfgrSystem::build(&m.projection, &m.h0, &m.hp, lambda, t),
            &e.collision_times,
        )?;
        let mut table = Table::new("steady.csv", &["T", "block", "trace", "min_eig", "residual"]);
        let mut kernels = Vec::new();
        for p in &points {
            kernels.push(json!({"T": p.t, "kernel_dim": p.kernel_dim}));
            match &p.state {
                Some(st) if p.is_unique() => {
                    for (k, (tr, me)) in st.traces().into_iter().zip(st.min_eigenvalues()).enumerate() {
                        table.push(vec![num(p.t)?, k.to_string(), num(tr)?, num(me)?, num(p.residual)?]);
                    }
                    self.audits.push(AuditLine::at_most(
                        format!("steady state residual T={}", p.t),
                        p.residual,
                        self.tol.trace,
                    ));
                }
                // reported, not resolved
                _ => self.audits.push(AuditLine {
                    check: format!("unique steady state T={} kernel_dim={}", p.t, p.kernel_dim),
                    residual: p.kernel_dim as f64,
                    tol: 1.0,
                    verdict: Verdict::Skipped,
                }),
            }
        }
        self.tables.push(table);
        self.extra.insert("lambda".into(), json!(lambda));
        self.extra.insert("kernels".into(), Value::Array(kernels));
        Ok(())
    }
}

fn write_manifest(dir: &Path, manifest: &Value) -> anyhow::Result<()> {
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(manifest)?).with_context(|| format!("cannot write {}", path.display()))
}

/// Runs one experiment and writes its tables and manifest into `opts.out`.
/// Returns the process exit code.
pub fn run_experiment(cfg: &ScenarioConfig, kind: ExperimentKind, opts: &Options) -> anyhow::Result<i32> {
    let start = Instant::now();
    fs::create_dir_all(&opts.out).with_context(|| format!("cannot create {}", opts.out.display()))?;
    let tol = cfg.experiment.tolerances.scaled(opts.tol_scale);
    let mut run = Run {
        cfg,
        seed: opts.seed,
        tol,
        tables: Vec::new(),
        audits: Vec::new(),
        extra: Map::new(),
    };
    let outcome = match kind {
        ExperimentKind::Audit => run.audit(),
        ExperimentKind::Generator => run.generator(),
        ExperimentKind::NzResidual => run.nz(),
        ExperimentKind::Sweep => run.sweep(),
        ExperimentKind::Qfgr => run.qfgr(),
        ExperimentKind::SteadyScan => run.steady(),
    };
    let mut written = Vec::new();
    let mut failure = outcome.err();
    for t in &run.tables {
        match t.write(&opts.out) {
            Ok(p) => written.push(p.file_name().unwrap().to_string_lossy().into_owned()),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    let audit_fail = run.audits.iter().any(|a| a.verdict == Verdict::Fail);
    let (status, code) = match (&failure, audit_fail) {
        (Some(_), _) => ("error", EXIT_ERROR),
        (None, true) => ("audit_fail", EXIT_AUDIT_FAIL),
        (None, false) => ("pass", EXIT_PASS),
    };
    let audits: Vec<Value> = run
        .audits
        .iter()
        .map(|a| {
            json!({
                "check": a.check,
                "residual": a.residual,
                "tol": if a.tol.is_finite() { json!(a.tol) } else { Value::Null },
                "verdict": a.verdict.to_string(),
            })
        })
        .collect();
    let manifest = json!({
        "experiment": kind.name(),
        "status": status,
        "partial": failure.is_some(),
        "error": failure.as_ref().map(|e| format!("{e:#}")),
        "config": cfg.raw,
        "seed_override": opts.seed,
        "tol_scale": opts.tol_scale,
        "versions": {
            "cpmarkov-cli": env!("CARGO_PKG_VERSION"),
            "cpmarkov-core": cpmarkov::VERSION,
        },
        "tolerances": {
            "eig": tol.eig,
            "trace": tol.trace,
            "gate": tol.gate,
            "nz": tol.nz,
        },
        "achieved": {
            "special_function_rel_tol": Provenance::default().special_function_rel_tol,
            "ode_step_tol": ODE_TOL,
        },
        "audits": audits,
        "results": run.extra,
        "outputs": written,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    write_manifest(&opts.out, &manifest)?;
    if let Some(e) = failure {
        eprintln!("error: {e:#}");
    }
    Ok(code)
}
