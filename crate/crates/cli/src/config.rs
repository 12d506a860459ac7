//! JSON scenario configs. Matrices are nested arrays of `[re, im]` pairs
//! (a bare number is read as a real entry).

use std::fmt;
use std::path::Path;

use cpmarkov::models::QuasiContinuumParams;
use cpmarkov::{CMatrix, ProjectionKind, C64};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Audit,
    Generator,
    NzResidual,
    Sweep,
    Qfgr,
    SteadyScan,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Audit => "audit",
            Self::Generator => "generator",
            Self::NzResidual => "nz_residual",
            Self::Sweep => "sweep",
            Self::Qfgr => "qfgr",
            Self::SteadyScan => "steady_scan",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "audit" => Self::Audit,
            "generator" => Self::Generator,
            "nz_residual" => Self::NzResidual,
            "sweep" => Self::Sweep,
            "qfgr" => Self::Qfgr,
            "steady_scan" => Self::SteadyScan,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub enum ModelSpec {
    Explicit { h0: CMatrix, hp: CMatrix },
    Random { seed: u64, dims: Option<Vec<usize>> },
    QuasiContinuum(QuasiContinuumParams),
}

#[derive(Debug, Clone)]
pub enum ProjectionSpec {
    PartialTrace { dim_a: usize, dim_b: usize, sigma: CMatrix },
    Diagonal { basis: CMatrix },
    BlockDiagonal { blocks: Vec<Vec<usize>> },
    Entangling { dim_a: usize, c_ops: Vec<CMatrix>, d_ops: Vec<CMatrix> },
    Custom { kraus: Vec<CMatrix> },
    /// Only the kind, for random models.
    Kind(ProjectionKind),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TTilde {
    Completed,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub eig: f64,
    pub trace: f64,
    pub gate: f64,
    pub nz: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eig: 1e-8,
            trace: 1e-9,
            gate: 1e-9,
            nz: 1e-4,
        }
    }
}

impl Tolerances {
    pub fn scaled(self, s: f64) -> Self {
        Self {
            eig: self.eig * s,
            trace: self.trace * s,
            gate: self.gate * s,
            nz: self.nz * s,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: Option<ExperimentKind>,
    pub lambdas: Vec<f64>,
    pub xi: f64,
    pub t_tilde: TTilde,
    pub tau_bar: f64,
    /// Collision times `T`.
    pub collision_times: Vec<f64>,
    /// Evolution times `t`.
    pub times: Vec<f64>,
    pub n_points: usize,
    pub steps: Vec<f64>,
    pub t_max: f64,
    pub tolerances: Tolerances,
    pub corrupt_dissipator: bool,
    pub initial_state: Option<CMatrix>,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    pub projection: Option<ProjectionSpec>,
    pub experiment: ExperimentSpec,
    pub raw: Value,
}

#[derive(Debug)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.violations.join("; "))
    }
}

impl std::error::Error for ConfigError {}

/// Collects violations while walking the document.
#[derive(Default)]
struct Walker {
    errors: Vec<String>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Walker {
    fn fail(&mut self, path: &str, msg: impl fmt::Display) {
        self.errors.push(format!("{path} {msg}"));
    }

    fn object<'a>(&mut self, v: Option<&'a Value>, path: &str) -> Option<&'a Map<String, Value>> {
        match v {
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                self.fail(path, "must be an object");
                None
            }
            None => {
                self.fail(path, "is missing");
                None
            }
        }
    }

    fn string<'a>(&mut self, m: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a str> {
        let p = join(path, key);
        match m.get(key) {
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                self.fail(&p, "must be a string");
                None
            }
            None => {
                self.fail(&p, "is missing");
                None
            }
        }
    }

    fn number(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<f64> {
        let p = join(path, key);
        match m.get(key) {
            Some(v) => self.number_value(v, &p),
            None => {
                self.fail(&p, "is missing");
                None
            }
        }
    }

    fn number_value(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(path, "must be a finite number");
                None
            }
        }
    }

    fn opt_number(&mut self, m: &Map<String, Value>, path: &str, key: &str, default: f64) -> f64 {
        if m.contains_key(key) {
            self.number(m, path, key).unwrap_or(default)
        } else {
            default
        }
    }

    fn count(&mut self, v: &Value, path: &str) -> Option<usize> {
        match v.as_u64() {
            Some(n) => Some(n as usize),
            None => {
                self.fail(path, "must be a non-negative integer");
                None
            }
        }
    }

    fn opt_count(&mut self, m: &Map<String, Value>, path: &str, key: &str, default: usize) -> usize {
        match m.get(key) {
            Some(v) => self.count(v, &join(path, key)).unwrap_or(default),
            None => default,
        }
    }

    fn req_count(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<usize> {
        match m.get(key) {
            Some(v) => self.count(v, &join(path, key)),
            None => {
                self.fail(&join(path, key), "is missing");
                None
            }
        }
    }

    fn numbers(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<Vec<f64>> {
        let p = join(path, key);
        match m.get(key)? {
            Value::Array(a) => {
                let out: Vec<Option<f64>> = a
                    .iter()
                    .enumerate()
                    .map(|(i, v)| self.number_value(v, &format!("{p}[{i}]")))
                    .collect();
                out.into_iter().collect()
            }
            v => self.number_value(v, &p).map(|x| vec![x]),
        }
    }

    fn entry(&mut self, v: &Value, path: &str) -> Option<C64> {
        match v {
            Value::Array(pair) if pair.len() == 2 => {
                let re = self.number_value(&pair[0], &format!("{path}[0]"))?;
                let im = self.number_value(&pair[1], &format!("{path}[1]"))?;
                Some(C64::new(re, im))
            }
            Value::Number(_) => self.number_value(v, path).map(|x| C64::new(x, 0.0)),
            _ => {
                self.fail(path, "must be a [re, im] pair or a number");
                None
            }
        }
    }

    fn matrix_value(&mut self, v: &Value, path: &str) -> Option<CMatrix> {
        let rows = match v {
            Value::Array(rows) if !rows.is_empty() => rows,
            _ => {
                self.fail(path, "must be a non-empty array of rows");
                return None;
            }
        };
        let n = rows.len();
        let mut m = CMatrix::zeros(n, n);
        let mut ok = true;
        for (i, row) in rows.iter().enumerate() {
            let rp = format!("{path}[{i}]");
            match row {
                Value::Array(cols) if cols.len() == n => {
                    for (j, e) in cols.iter().enumerate() {
                        match self.entry(e, &format!("{rp}[{j}]")) {
                            Some(z) => m[(i, j)] = z,
                            None => ok = false,
                        }
                    }
                }
                _ => {
                    self.fail(&rp, format!("must be a row of {n} entries (matrices are square)"));
                    ok = false;
                }
            }
        }
        ok.then_some(m)
    }

    fn matrix(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<CMatrix> {
        let p = join(path, key);
        match m.get(key) {
            Some(v) => self.matrix_value(v, &p),
            None => {
                self.fail(&p, "is missing");
                None
            }
        }
    }

    fn matrices(&mut self, m: &Map<String, Value>, path: &str, key: &str) -> Option<Vec<CMatrix>> {
        let p = join(path, key);
        match m.get(key) {
            Some(Value::Array(a)) if !a.is_empty() => {
                let out: Vec<Option<CMatrix>> = a
                    .iter()
                    .enumerate()
                    .map(|(i, v)| self.matrix_value(v, &format!("{p}[{i}]")))
                    .collect();
                out.into_iter().collect()
            }
            Some(_) => {
                self.fail(&p, "must be a non-empty array of matrices");
                None
            }
            None => {
                self.fail(&p, "is missing");
                None
            }
        }
    }
}

fn projection_kind(s: &str) -> Option<ProjectionKind> {
    Some(match s {
        "partial_trace" => ProjectionKind::PartialTrace,
        "diagonal" => ProjectionKind::Diagonal,
        "block_diagonal" => ProjectionKind::BlockDiagonal,
        "entangling" => ProjectionKind::Entangling,
        "custom" => ProjectionKind::Custom,
        _ => return None,
    })
}

fn parse_model(w: &mut Walker, root: &Map<String, Value>) -> Option<ModelSpec> {
    let m = w.object(root.get("model"), "model")?;
    let kind = w.string(m, "model", "kind")?;
    let seed = match m.get("seed") {
        Some(v) => w.count(v, "model.seed").map(|s| s as u64),
        None => Some(0),
    }?;
    match kind {
        "explicit" => {
            let h0 = w.matrix(m, "model", "h0");
            let hp = w.matrix(m, "model", "hp");
            Some(ModelSpec::Explicit { h0: h0?, hp: hp? })
        }
        "random" => {
            let dims = match m.get("dims") {
                Some(Value::Array(a)) => {
                    let v: Vec<Option<usize>> =
                        a.iter().enumerate().map(|(i, x)| w.count(x, &format!("model.dims[{i}]"))).collect();
                    Some(v.into_iter().collect::<Option<Vec<_>>>()?)
                }
                Some(_) => {
                    w.fail("model.dims", "must be an array of integers");
                    return None;
                }
                None => None,
            };
            Some(ModelSpec::Random { seed, dims })
        }
        "quasi_continuum" => {
            let d = QuasiContinuumParams::default();
            let params = QuasiContinuumParams {
                n_bath: w.opt_count(m, "model", "n_bath", d.n_bath),
                width: w.opt_number(m, "model", "width", d.width),
                beta: w.opt_number(m, "model", "beta", d.beta),
                delta: w.opt_number(m, "model", "delta", d.delta),
                seed: if m.contains_key("seed") { seed } else { d.seed },
            };
            if params.n_bath < 2 {
                w.fail("model.n_bath", "must be at least 2");
            }
            if params.width <= 0.0 {
                w.fail("model.width", "must be positive");
            }
            if params.beta < 0.0 {
                w.fail("model.beta", "must be non-negative");
            }
            Some(ModelSpec::QuasiContinuum(params))
        }
        other => {
            w.fail("model.kind", format!("unknown kind '{other}' (explicit, random, quasi_continuum)"));
            None
        }
    }
}

fn parse_projection(w: &mut Walker, root: &Map<String, Value>, model: Option<&ModelSpec>) -> Option<ProjectionSpec> {
    let needs = !matches!(model, Some(ModelSpec::QuasiContinuum(_)));
    if !root.contains_key("projection") && !needs {
        return None;
    }
    let p = w.object(root.get("projection"), "projection")?;
    let kind_str = w.string(p, "projection", "kind")?;
    let Some(kind) = projection_kind(kind_str) else {
        w.fail(
            "projection.kind",
            format!("unknown kind '{kind_str}' (partial_trace, diagonal, block_diagonal, entangling, custom)"),
        );
        return None;
    };
    match model {
        Some(ModelSpec::Random { .. }) => return Some(ProjectionSpec::Kind(kind)),
        Some(ModelSpec::QuasiContinuum(_)) => {
            if kind != ProjectionKind::PartialTrace {
                w.fail("projection.kind", "quasi_continuum models use partial_trace");
            }
            return None;
        }
        _ => {}
    }
    let path = "projection";
    match kind {
        ProjectionKind::PartialTrace => {
            let dim_a = w.req_count(p, path, "dim_a");
            let dim_b = w.req_count(p, path, "dim_b");
            let sigma = w.matrix(p, path, "sigma");
            Some(ProjectionSpec::PartialTrace {
                dim_a: dim_a?,
                dim_b: dim_b?,
                sigma: sigma?,
            })
        }
        ProjectionKind::Diagonal => Some(ProjectionSpec::Diagonal {
            basis: w.matrix(p, path, "basis")?,
        }),
        ProjectionKind::BlockDiagonal => {
            let blocks = match p.get("blocks") {
                Some(Value::Array(bs)) => {
                    let mut out = Vec::new();
                    for (i, b) in bs.iter().enumerate() {
                        let bp = format!("projection.blocks[{i}]");
                        match b {
                            Value::Array(ix) => {
                                let v: Vec<Option<usize>> =
                                    ix.iter().enumerate().map(|(j, x)| w.count(x, &format!("{bp}[{j}]"))).collect();
                                out.push(v.into_iter().collect::<Option<Vec<_>>>()?);
                            }
                            _ => {
                                w.fail(&bp, "must be an array of indices");
                                return None;
                            }
                        }
                    }
                    out
                }
                Some(_) => {
                    w.fail("projection.blocks", "must be an array of index arrays");
                    return None;
                }
                None => {
                    w.fail("projection.blocks", "is missing");
                    return None;
                }
            };
            Some(ProjectionSpec::BlockDiagonal { blocks })
        }
        ProjectionKind::Entangling => {
            let dim_a = w.req_count(p, path, "dim_a");
            let c_ops = w.matrices(p, path, "c_ops");
            let d_ops = w.matrices(p, path, "d_ops");
            Some(ProjectionSpec::Entangling {
                dim_a: dim_a?,
                c_ops: c_ops?,
                d_ops: d_ops?,
            })
        }
        ProjectionKind::Custom => Some(ProjectionSpec::Custom {
            kraus: w.matrices(p, path, "kraus")?,
        }),
    }
}

fn parse_experiment(w: &mut Walker, root: &Map<String, Value>) -> Option<ExperimentSpec> {
    let e = w.object(root.get("experiment"), "experiment")?;
    let path = "experiment";
    let kind = match e.get("kind") {
        Some(Value::String(s)) => match ExperimentKind::parse(s) {
            Some(k) => Some(k),
            None => {
                w.fail("experiment.kind", format!("unknown kind '{s}'"));
                None
            }
        },
        Some(_) => {
            w.fail("experiment.kind", "must be a string");
            None
        }
        None => None,
    };
    let lambdas = w.numbers(e, path, "lambdas").unwrap_or_else(|| vec![0.1]);
    for (i, &l) in lambdas.iter().enumerate() {
        if !(l > 0.0 && l < 1.0) {
            w.fail(&format!("experiment.lambdas[{i}]"), "out of (0,1)");
        }
    }
    let xi = w.opt_number(e, path, "xi", 1.0);
    if kind == Some(ExperimentKind::Sweep) && !(xi > 0.0 && xi < 2.0) {
        w.fail("experiment.xi", "out of (0,2)");
    }
    let t_tilde = match e.get("t_tilde") {
        None => TTilde::Completed,
        Some(Value::String(s)) if s == "eq37" || s == "completed" => TTilde::Completed,
        Some(v) => match w.number_value(v, "experiment.t_tilde") {
            Some(x) if x > 0.0 => TTilde::Fixed(x),
            Some(_) => {
                w.fail("experiment.t_tilde", "must be positive or \"completed\"");
                TTilde::Completed
            }
            None => TTilde::Completed,
        },
    };
    let tau_bar = w.opt_number(e, path, "tau_bar", 1.0);
    if tau_bar <= 0.0 {
        w.fail("experiment.tau_bar", "must be positive");
    }
    let collision_times = w.numbers(e, path, "collision_times").unwrap_or_else(|| vec![1.0]);
    for (i, &t) in collision_times.iter().enumerate() {
        if t <= 0.0 {
            w.fail(&format!("experiment.collision_times[{i}]"), "must be positive");
        }
    }
    let times = w.numbers(e, path, "times").unwrap_or_else(|| vec![0.0, 0.1, 1.0, 10.0]);
    for (i, &t) in times.iter().enumerate() {
        if t < 0.0 {
            w.fail(&format!("experiment.times[{i}]"), "must be non-negative");
        }
    }
    if times.windows(2).any(|p| p[1] < p[0]) {
        w.fail("experiment.times", "must be sorted");
    }
    let n_points = w.opt_count(e, path, "n_points", 64);
    if kind == Some(ExperimentKind::Sweep) && n_points < 16 {
        w.fail("experiment.n_points", "must be at least 16");
    }
    let steps = w.numbers(e, path, "steps").unwrap_or_else(|| vec![0.01, 0.005]);
    for (i, &s) in steps.iter().enumerate() {
        if s <= 0.0 {
            w.fail(&format!("experiment.steps[{i}]"), "must be positive");
        }
    }
    let t_max = w.opt_number(e, path, "t_max", 4.0);
    if t_max <= 0.0 {
        w.fail("experiment.t_max", "must be positive");
    }
    let mut tolerances = Tolerances::default();
    if let Some(tv) = e.get("tolerances") {
        if let Some(t) = w.object(Some(tv), "experiment.tolerances") {
            let tp = "experiment.tolerances";
            tolerances = Tolerances {
                eig: w.opt_number(t, tp, "eig", tolerances.eig),
                trace: w.opt_number(t, tp, "trace", tolerances.trace),
                gate: w.opt_number(t, tp, "gate", tolerances.gate),
                nz: w.opt_number(t, tp, "nz", tolerances.nz),
            };
            for (name, v) in [
                ("eig", tolerances.eig),
                ("trace", tolerances.trace),
                ("gate", tolerances.gate),
                ("nz", tolerances.nz),
            ] {
                if v <= 0.0 {
                    w.fail(&format!("{tp}.{name}"), "must be positive");
                }
            }
        }
    }
    let corrupt_dissipator = match e.get("corrupt_dissipator") {
        None => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => {
            w.fail("experiment.corrupt_dissipator", "must be a boolean");
            false
        }
    };
    let initial_state = if e.contains_key("initial_state") {
        w.matrix(e, path, "initial_state")
    } else {
        None
    };
    Some(ExperimentSpec {
        kind,
        lambdas,
        xi,
        t_tilde,
        tau_bar,
        collision_times,
        times,
        n_points,
        steps,
        t_max,
        tolerances,
        corrupt_dissipator,
        initial_state,
    })
}

pub fn parse_config(raw: Value) -> Result<ScenarioConfig, ConfigError> {
    let mut w = Walker::default();
    let Some(root) = raw.as_object() else {
        return Err(ConfigError {
            violations: vec!["document must be a JSON object".into()],
        });
    };
    let model = parse_model(&mut w, root);
    let projection = parse_projection(&mut w, root, model.as_ref());
    let experiment = parse_experiment(&mut w, root);
    match (model, experiment) {
        (Some(model), Some(experiment)) if w.errors.is_empty() => Ok(ScenarioConfig {
            model,
            projection,
            experiment,
            raw,
        }),
        _ => Err(ConfigError { violations: w.errors }),
    }
}

pub fn load_config(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let raw: Value = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("config {} is not valid JSON: {e}", path.display()))?;
    Ok(parse_config(raw)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "model": {"kind": "explicit", "h0": [[[0.0, 0.0], 0.0], [0.0, [1.0, 0.0]]], "hp": [[0, 1], [1, 0]]},
            "projection": {"kind": "diagonal", "basis": [[1, 0], [0, 1]]},
            "experiment": {"kind": "audit"}
        })
    }

    #[test]
    fn minimal_config_loads() {
        let c = parse_config(minimal()).unwrap();
        assert!(matches!(c.model, ModelSpec::Explicit { .. }));
        assert_eq!(c.experiment.kind, Some(ExperimentKind::Audit));
        assert_eq!(c.experiment.tolerances, Tolerances::default());
    }

    #[test]
    fn xi_out_of_range_is_named() {
        let mut v = minimal();
        v["experiment"] = json!({"kind": "sweep", "xi": 2.5});
        let e = parse_config(v).unwrap_err();
        assert!(e.violations.iter().any(|s| s == "experiment.xi out of (0,2)"), "{e}");
    }

    #[test]
    fn missing_sigma_is_named() {
        let mut v = minimal();
        v["projection"] = json!({"kind": "partial_trace", "dim_a": 2, "dim_b": 1});
        let e = parse_config(v).unwrap_err();
        assert!(e.to_string().contains("projection.sigma is missing"), "{e}");
    }

    #[test]
    fn several_violations_are_collected() {
        let mut v = minimal();
        v["experiment"] = json!({"lambdas": [0.2, 1.5], "tolerances": {"eig": -1.0}});
        v["model"]["hp"] = json!([[0, "x"], [1, 0]]);
        let e = parse_config(v).unwrap_err();
        let s = e.to_string();
        assert!(s.contains("experiment.lambdas[1] out of (0,1)"), "{s}");
        assert!(s.contains("experiment.tolerances.eig must be positive"), "{s}");
        assert!(s.contains("model.hp[0][1]"), "{s}");
    }

    #[test]
    fn random_model_takes_kind_only() {
        let v = json!({
            "model": {"kind": "random", "seed": 4},
            "projection": {"kind": "entangling"},
            "experiment": {"kind": "generator", "t_tilde": "eq37"}
        });
        let c = parse_config(v).unwrap();
        assert!(matches!(c.projection, Some(ProjectionSpec::Kind(ProjectionKind::Entangling))));
    }

    #[test]
    fn quasi_continuum_needs_no_projection() {
        let v = json!({"model": {"kind": "quasi_continuum", "n_bath": 8}, "experiment": {"kind": "sweep"}});
        let c = parse_config(v).unwrap();
        assert!(c.projection.is_none());
        match c.model {
            ModelSpec::QuasiContinuum(p) => {
                assert_eq!(p.n_bath, 8);
                assert_eq!(p.seed, QuasiContinuumParams::default().seed);
            }
            _ => panic!(),
        }
    }
}
