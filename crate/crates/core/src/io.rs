//! Problem files, task dispatch and reports.
//!
//! Problems are JSON (`version` "1"); reports are JSON with sorted keys so
//! identical inputs give identical bytes. Complex numbers are `{re, im}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{self, ChannelError, ChannelModel};
use crate::classify::{self, AmplificationSpec, ClassifyError};
use crate::feasibility::{
    self, FeasibilityCertificate, FeasibilityError, OmegaMatrix, SearchOptions, SearchOutcome,
};
use crate::gaussian::{self, GainProbabilityModel, GaussianError, GaussianState};
use crate::homodyne::{self, HomodyneError};
use crate::kraus::{self, KrausError};
use crate::linalg::CMatrix;
use crate::state::{self, Observable, PureState, StateError};

pub const FORMAT_VERSION: &str = "1";
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum IoError {
    #[error("invalid JSON: {0}")]
    Parse(String),
    #[error("schema error at {path}: {expected}")]
    Schema { path: String, expected: String },
    #[error("unsupported version {0:?}, expected \"1\"")]
    VersionUnsupported(String),
    #[error("task {task} produces no table")]
    NoTable { task: String },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error(transparent)]
    Kraus(#[from] KrausError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Homodyne(#[from] HomodyneError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("file: {0}")]
    File(String),
}

impl IoError {
    pub fn kind(&self) -> &'static str {
        match self {
            IoError::Parse(_) => "parse-error",
            IoError::Schema { .. } => "schema-error",
            IoError::VersionUnsupported(_) => "version-unsupported",
            IoError::NoTable { .. } => "no-table",
            IoError::State(_) => "state-error",
            IoError::Feasibility(_) => "feasibility-error",
            IoError::Kraus(_) => "kraus-error",
            IoError::Classify(_) => "classify-error",
            IoError::Gaussian(_) => "gaussian-error",
            IoError::Homodyne(_) => "homodyne-error",
            IoError::Channel(_) => "channel-error",
            IoError::Csv(_) => "csv-error",
            IoError::File(_) => "file-error",
        }
    }

    /// Structured diagnostic for error output.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("kind".into(), json!(self.kind()));
        m.insert("message".into(), json!(self.to_string()));
        if let IoError::Schema { path, expected } = self {
            m.insert("path".into(), json!(path));
            m.insert("expected".into(), json!(expected));
        }
        json!({ "error": m })
    }
}

pub type Result<T> = std::result::Result<T, IoError>;

fn schema(path: impl Into<String>, expected: impl Into<String>) -> IoError {
    IoError::Schema {
        path: path.into(),
        expected: expected.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl From<Cx> for Complex64 {
    fn from(c: Cx) -> Self {
        Complex64::new(c.re, c.im)
    }
}

impl From<Complex64> for Cx {
    fn from(z: Complex64) -> Self {
        Cx { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Feasibility,
    Synthesize,
    Classify,
    Theorem,
    GainProbability,
    Homodyne,
    Channel,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Feasibility,
        Task::Synthesize,
        Task::Classify,
        Task::Theorem,
        Task::GainProbability,
        Task::Homodyne,
        Task::Channel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Feasibility => "feasibility",
            Task::Synthesize => "synthesize",
            Task::Classify => "classify",
            Task::Theorem => "theorem",
            Task::GainProbability => "gain-probability",
            Task::Homodyne => "homodyne",
            Task::Channel => "channel",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    Coherent {
        alpha_re: f64,
        #[serde(default)]
        alpha_im: f64,
    },
    Gaussian {
        d: [f64; 2],
        gamma: [[f64; 2]; 2],
    },
    Fock {
        amplitudes: Vec<Cx>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Named(NamedObservable),
    Custom { custom: Vec<Vec<Cx>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedObservable {
    Number,
    QuadratureQ,
    QuadratureP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremMode {
    Theorem,
    Corollary,
    Both,
}

fn default_tol() -> f64 {
    feasibility::DEFAULT_TOL
}
fn default_restarts() -> usize {
    feasibility::DEFAULT_RESTARTS
}
fn default_trials() -> u64 {
    100_000
}
fn default_one() -> usize {
    1
}
fn default_c() -> f64 {
    10.0
}
fn default_dt() -> f64 {
    channel::DEFAULT_DT
}
fn default_t_max() -> f64 {
    3.0
}
fn default_channel() -> ChannelModel {
    ChannelModel::unit_loss()
}
fn default_theorem_mode() -> TheoremMode {
    TheoremMode::Theorem
}

/// Task parameters; every field has a default so a parsed file is complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Fock truncation; derived from the states when absent.
    #[serde(default)]
    pub dim: Option<usize>,
    /// User-supplied `Omega` for the feasibility check.
    #[serde(default)]
    pub omega: Option<Vec<Vec<Cx>>>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_one")]
    pub shards: usize,
    /// Homodyne signal amplitudes.
    #[serde(default)]
    pub b: Vec<f64>,
    /// Homodyne local-oscillator amplitude.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Homodyne phases.
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default = "default_channel")]
    pub channel: ChannelModel,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default = "default_theorem_mode")]
    pub check: TheoremMode,
    /// Gain-probability model: ancilla overlap `C`.
    #[serde(default)]
    pub overlap_c: Option<f64>,
    /// Gain-probability model: failure ratio `V`.
    #[serde(default)]
    pub ratio_v: Option<f64>,
    /// Pair distance `D`; taken from the first two states when absent.
    #[serde(default)]
    pub distance: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub d_min: Option<f64>,
    /// Gains at which to tabulate `f(g)`.
    #[serde(default)]
    pub gain_grid: Vec<f64>,
}

impl Default for Params {
    fn default() -> Self {
        serde_json::from_value(json!({})).expect("all params have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: String,
    pub task: Task,
    #[serde(default)]
    pub states: Vec<StateSpec>,
    /// Explicit targets; derived from states and gains when absent.
    #[serde(default)]
    pub targets: Option<Vec<StateSpec>>,
    #[serde(default)]
    pub gains: Vec<f64>,
    #[serde(default)]
    pub probs: Vec<f64>,
    #[serde(default)]
    pub observables: Vec<ObservableSpec>,
    #[serde(default)]
    pub params: Params,
}

pub fn parse_problem(text: &str) -> Result<ProblemFile> {
    let value: Value = serde_json::from_str(text).map_err(|e| IoError::Parse(e.to_string()))?;
    match value.get("version") {
        Some(Value::String(v)) if v == FORMAT_VERSION => {}
        Some(Value::String(v)) => return Err(IoError::VersionUnsupported(v.clone())),
        Some(other) => return Err(IoError::VersionUnsupported(other.to_string())),
        None => return Err(schema("version", "string \"1\"")),
    }
    if let Some(Value::String(t)) = value.get("task") {
        if Task::from_name(t).is_none() {
            let names: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
            return Err(schema("task", format!("one of {}", names.join(", "))));
        }
    }
    let problem: ProblemFile = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        schema(
            if path == "." { String::new() } else { path },
            e.into_inner().to_string(),
        )
    })?;
    validate(&problem)?;
    Ok(problem)
}

fn validate(p: &ProblemFile) -> Result<()> {
    let n = p.states.len();
    for (i, &q) in p.probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&q) {
            return Err(schema(format!("probs[{i}]"), "number in [0, 1]"));
        }
    }
    for (i, &g) in p.gains.iter().enumerate() {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(schema(format!("gains[{i}]"), "finite number >= 0"));
        }
    }
    if !p.probs.is_empty() && p.probs.len() != n {
        return Err(schema("probs", format!("{n} entries, one per state")));
    }
    if !p.gains.is_empty() && p.gains.len() != n {
        return Err(schema("gains", format!("{n} entries, one per state")));
    }
    if let Some(t) = &p.targets {
        if t.len() != n {
            return Err(schema("targets", format!("{n} entries, one per state")));
        }
    }
    let pr = &p.params;
    if !(pr.tol > 0.0 && pr.tol.is_finite()) {
        return Err(schema("params.tol", "positive number"));
    }
    if !(pr.dt > 0.0 && pr.dt.is_finite()) {
        return Err(schema("params.dt", "positive number"));
    }
    if pr.restarts == 0 {
        return Err(schema("params.restarts", "positive integer"));
    }
    if pr.shards == 0 {
        return Err(schema("params.shards", "positive integer"));
    }
    if pr.dim == Some(0) {
        return Err(schema("params.dim", "positive integer"));
    }
    for (i, s) in p
        .states
        .iter()
        .chain(p.targets.iter().flatten())
        .enumerate()
    {
        if let StateSpec::Fock { amplitudes } = s {
            if amplitudes.is_empty() {
                return Err(schema(format!("states[{i}].amplitudes"), "non-empty list"));
            }
        }
    }
    Ok(())
}

/// Canonical serialization: every default written out, keys sorted.
pub fn serialize_problem(p: &ProblemFile) -> String {
    let value = serde_json::to_value(p).expect("problem serializes");
    serde_json::to_string_pretty(&value).expect("value serializes")
}

/// Hex SHA-256 of the canonical problem text.
pub fn problem_hash(p: &ProblemFile) -> String {
    hex::encode(Sha256::digest(serialize_problem(p).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub problem_sha256: String,
    pub seed: u64,
    pub library_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub task: Task,
    pub problem: Value,
    pub verdicts: Value,
    pub tables: Value,
    pub provenance: Provenance,
    pub tolerances: Value,
    pub warnings: Vec<String>,
    /// Rows for CSV export, with the column order.
    #[serde(skip)]
    pub csv: Option<(Vec<&'static str>, Vec<Vec<String>>)>,
}

impl Report {
    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let (header, rows) = self.csv.as_ref().ok_or_else(|| IoError::NoTable {
            task: self.task.name().into(),
        })?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)
            .map_err(|e| IoError::Csv(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| IoError::Csv(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| IoError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| IoError::Csv(e.to_string()))
    }
}

fn matrix_json(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!(Cx::from(m[(i, j)]))).collect()))
            .collect(),
    )
}

fn matrix_from_rows(rows: &[Vec<Cx>], path: &str) -> Result<CMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(schema(path, "square matrix of {re, im} entries"));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j].into()))
}

fn fmt(x: f64) -> String {
    // shortest round-trip representation
    let s = serde_json::to_string(&x).unwrap_or_else(|_| x.to_string());
    if s == "null" {
        x.to_string()
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Truncation shared by all Fock-space states of a problem.
fn fock_dim(p: &ProblemFile) -> usize {
    if let Some(d) = p.params.dim {
        return d;
    }
    let specs = p.states.iter().chain(p.targets.iter().flatten());
    let mut dim = 1;
    for s in specs {
        dim = dim.max(match s {
            StateSpec::Coherent { alpha_re, alpha_im } => {
                state::default_dim(Complex64::new(*alpha_re, *alpha_im))
            }
            StateSpec::Fock { amplitudes } => amplitudes.len(),
            StateSpec::Gaussian { .. } => 1,
        });
    }
    // amplified coherent targets need room as well
    let gmax = p.gains.iter().copied().fold(1.0f64, f64::max);
    if p.targets.is_none() {
        for s in &p.states {
            if let StateSpec::Coherent { alpha_re, alpha_im } = s {
                dim = dim.max(state::default_dim(
                    Complex64::new(*alpha_re, *alpha_im) * gmax,
                ));
            }
        }
    }
    dim
}

fn fock_state(spec: &StateSpec, dim: usize, path: &str) -> Result<PureState> {
    match spec {
        StateSpec::Coherent { alpha_re, alpha_im } => Ok(state::make_coherent_state(
            Complex64::new(*alpha_re, *alpha_im),
            dim,
        )?),
        StateSpec::Fock { amplitudes } => {
            if amplitudes.len() > dim {
                return Err(schema(
                    format!("{path}.amplitudes"),
                    format!("at most {dim} amplitudes"),
                ));
            }
            let v = crate::linalg::CVector::from_fn(dim, |i, _| {
                amplitudes
                    .get(i)
                    .copied()
                    .map_or(crate::linalg::ZERO, Complex64::from)
            });
            PureState::new(v)
                .map_err(|e| schema(path, format!("normalized amplitude vector ({e})")))
        }
        StateSpec::Gaussian { .. } => Err(schema(
            path,
            "coherent or fock state (gaussian moments have no Fock vector)",
        )),
    }
}

fn gaussian_state(spec: &StateSpec, path: &str) -> Result<GaussianState> {
    match spec {
        StateSpec::Coherent { alpha_re, alpha_im } => Ok(GaussianState::coherent(Complex64::new(
            *alpha_re, *alpha_im,
        ))),
        StateSpec::Gaussian { d, gamma } => GaussianState::new(*d, *gamma)
            .map_err(|e| schema(path, format!("valid gaussian moments ({e})"))),
        StateSpec::Fock { .. } => Err(schema(path, "coherent or gaussian state")),
    }
}

fn derived_target(spec: &StateSpec, g: f64, path: &str) -> Result<StateSpec> {
    match spec {
        StateSpec::Coherent { alpha_re, alpha_im } => Ok(StateSpec::Coherent {
            alpha_re: g * alpha_re,
            alpha_im: g * alpha_im,
        }),
        StateSpec::Gaussian { d, gamma } => Ok(StateSpec::Gaussian {
            d: [g * d[0], g * d[1]],
            gamma: *gamma,
        }),
        StateSpec::Fock { .. } => Err(schema(path, "explicit targets for fock inputs")),
    }
}

fn target_specs(p: &ProblemFile) -> Result<Vec<StateSpec>> {
    if let Some(t) = &p.targets {
        return Ok(t.clone());
    }
    if p.gains.len() != p.states.len() {
        return Err(schema("gains", "one gain per state (or explicit targets)"));
    }
    p.states
        .iter()
        .zip(&p.gains)
        .enumerate()
        .map(|(i, (s, &g))| derived_target(s, g, &format!("states[{i}]")))
        .collect()
}

fn observables(p: &ProblemFile, dim: usize) -> Result<Vec<Observable>> {
    p.observables
        .iter()
        .enumerate()
        .map(|(i, o)| match o {
            ObservableSpec::Named(NamedObservable::Number) => Ok(Observable::number(dim)?),
            ObservableSpec::Named(NamedObservable::QuadratureQ) => {
                Ok(Observable::quadrature_q(dim)?)
            }
            ObservableSpec::Named(NamedObservable::QuadratureP) => {
                Ok(Observable::quadrature_p(dim)?)
            }
            ObservableSpec::Custom { custom } => {
                let path = format!("observables[{i}].custom");
                let m = matrix_from_rows(custom, &path)?;
                if m.nrows() != dim {
                    return Err(schema(path, format!("{dim}x{dim} Hermitian matrix")));
                }
                Observable::new(m).map_err(|e| schema(format!("observables[{i}]"), e.to_string()))
            }
        })
        .collect()
}

struct FockProblem {
    inputs: Vec<PureState>,
    targets: Vec<PureState>,
    probs: Vec<f64>,
    gains: Vec<f64>,
}

fn fock_problem(p: &ProblemFile) -> Result<FockProblem> {
    if p.states.is_empty() {
        return Err(schema("states", "at least one state"));
    }
    let dim = fock_dim(p);
    let inputs = p
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| fock_state(s, dim, &format!("states[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let targets = target_specs(p)?
        .iter()
        .enumerate()
        .map(|(i, s)| fock_state(s, dim, &format!("targets[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let probs = if p.probs.is_empty() {
        vec![1.0; inputs.len()]
    } else {
        p.probs.clone()
    };
    let gains = if p.gains.is_empty() {
        vec![1.0; inputs.len()]
    } else {
        p.gains.clone()
    };
    Ok(FockProblem {
        inputs,
        targets,
        probs,
        gains,
    })
}

fn search_options(p: &Params) -> SearchOptions {
    SearchOptions {
        restarts: p.restarts,
        seed: p.seed,
        tol: p.tol,
        ..SearchOptions::default()
    }
}

fn certificate_json(c: &FeasibilityCertificate) -> Value {
    json!({
        "feasible": c.feasible,
        "method": c.method,
        "min_eig_omega": c.min_eig_omega,
        "min_eig_k": c.min_eig_k,
        "diag_ok": c.diag_ok,
        "omega": matrix_json(c.omega.entries()),
        "residual_k": matrix_json(&c.residual_k),
    })
}

/// Feasibility certificate, or the best penalty when the search fails.
struct FeasibilityRun {
    verdicts: Map<String, Value>,
    certificate: Option<FeasibilityCertificate>,
}

fn run_feasibility_core(
    p: &ProblemFile,
    fp: &FockProblem,
    warnings: &mut Vec<String>,
) -> Result<FeasibilityRun> {
    let g_pi = state::gram_matrix(&fp.inputs)?;
    let g_xi = state::gram_matrix(&fp.targets)?;
    let mut v = Map::new();
    v.insert("gram_inputs_min_eig".into(), json!(g_pi.min_eigenvalue()));
    let n = fp.inputs.len();
    if let Some(rows) = &p.params.omega {
        let m = matrix_from_rows(rows, "params.omega")?;
        let omega = OmegaMatrix::new(m, fp.probs.clone())?;
        let cert = feasibility::check_feasibility(&g_pi, &g_xi, &omega, p.params.tol)?;
        v.insert("feasible".into(), json!(cert.feasible));
        v.insert("certificate".into(), certificate_json(&cert));
        let certificate = cert.feasible.then_some(cert);
        return Ok(FeasibilityRun {
            verdicts: v,
            certificate,
        });
    }
    if n == 2 {
        let (s, t) = (g_pi.entries[(0, 1)], g_xi.entries[(0, 1)]);
        v.insert(
            "p_max".into(),
            json!(feasibility::max_success_probability(s, t)?),
        );
        if fp.probs[0] == fp.probs[1] {
            let cert = feasibility::solve_two_state(s, t, fp.probs[0])?;
            let cert = FeasibilityCertificate {
                tol: p.params.tol,
                ..cert
            };
            v.insert("feasible".into(), json!(cert.feasible));
            v.insert("certificate".into(), certificate_json(&cert));
            let certificate = cert.feasible.then_some(cert);
            return Ok(FeasibilityRun {
                verdicts: v,
                certificate,
            });
        }
    }
    match feasibility::search_omega(&g_pi, &g_xi, &fp.probs, &search_options(&p.params))? {
        SearchOutcome::Found {
            certificate,
            penalty,
        } => {
            v.insert("feasible".into(), json!(true));
            v.insert("penalty".into(), json!(penalty));
            v.insert("certificate".into(), certificate_json(&certificate));
            Ok(FeasibilityRun {
                verdicts: v,
                certificate: Some(certificate),
            })
        }
        SearchOutcome::NotFound {
            best_penalty,
            best_omega,
        } => {
            warnings.push(format!(
                "no admissible omega found in {} restarts",
                p.params.restarts
            ));
            v.insert("feasible".into(), json!(false));
            v.insert("penalty".into(), json!(best_penalty));
            v.insert("best_omega".into(), matrix_json(&best_omega));
            Ok(FeasibilityRun {
                verdicts: v,
                certificate: None,
            })
        }
    }
}

fn run_feasibility(p: &ProblemFile, w: &mut Vec<String>) -> Result<(Value, Value, Option<Csv>)> {
    let fp = fock_problem(p)?;
    let run = run_feasibility_core(p, &fp, w)?;
    Ok((Value::Object(run.verdicts), json!({}), None))
}

fn run_synthesize(p: &ProblemFile, w: &mut Vec<String>) -> Result<(Value, Value, Option<Csv>)> {
    let fp = fock_problem(p)?;
    let run = run_feasibility_core(p, &fp, w)?;
    let mut v = run.verdicts;
    let Some(cert) = run.certificate else {
        w.push("transformation is infeasible; no Kraus operators synthesized".into());
        return Ok((Value::Object(v), json!({}), None));
    };
    let kraus_set = kraus::synthesize(&fp.inputs, &fp.targets, &cert.omega)?;
    let spec = AmplificationSpec::new(
        fp.inputs.clone(),
        fp.targets.clone(),
        fp.gains.clone(),
        fp.probs.clone(),
        vec![],
    )?;
    let report = kraus::verify_kraus(&kraus_set, &spec)?;
    let g_pi = state::gram_matrix(&fp.inputs)?;
    let g_xi = state::gram_matrix(&fp.targets)?;
    let k = feasibility::residual_k(&g_pi, &g_xi, &cert.omega)?;
    let gram_residual =
        kraus::gram_reconstruction_residual(&kraus_set, &fp.inputs, &fp.targets, &k)?;
    let states: Vec<Value> = report
        .states
        .iter()
        .map(|s| {
            json!({
                "index": s.index,
                "expected_probability": s.expected_probability,
                "success_probability": s.success_probability,
                "coefficient_probability": s.coefficient_probability,
                "fidelity": s.fidelity,
                "action_residual": s.action_residual,
                "conjugation_residual": s.conjugation_residual,
                "probability_ok": s.probability_ok,
                "fidelity_ok": s.fidelity_ok,
            })
        })
        .collect();
    v.insert(
        "verification".into(),
        json!({
            "passed": report.passed,
            "completeness_margin": report.completeness_margin,
            "completeness_ok": report.completeness_ok,
            "gram_residual": gram_residual,
            "states": states,
        }),
    );
    let tables = json!({
        "kraus": kraus_set.operators.iter().map(matrix_json).collect::<Vec<_>>(),
        "coefficients": matrix_json(&kraus_set.coeffs),
    });
    Ok((Value::Object(v), tables, None))
}

fn run_classify(p: &ProblemFile, _w: &mut Vec<String>) -> Result<(Value, Value, Option<Csv>)> {
    let fp = fock_problem(p)?;
    let dim = fp.inputs[0].dim();
    let obs = observables(p, dim)?;
    let spec = AmplificationSpec::new(
        fp.inputs.clone(),
        fp.targets.clone(),
        fp.gains.clone(),
        fp.probs.clone(),
        obs,
    )?;
    let class = classify::classify(&spec, &search_options(&p.params))?;
    let mut residuals = Vec::new();
    for (a, o) in spec.observables().iter().enumerate() {
        for i in 0..spec.len() {
            let r = classify::noiseless_residual(
                o,
                &spec.inputs()[i],
                &spec.targets()[i],
                spec.gains()[i],
            )?;
            residuals.push(json!({ "observable": a, "state": i, "residual": r }));
        }
    }
    let mut v = serde_json::to_value(&class).expect("class serializes");
    v["noiseless_residuals"] = Value::Array(residuals);
    Ok((v, json!({}), None))
}

type Csv = (Vec<&'static str>, Vec<Vec<String>>);

fn gaussian_states(p: &ProblemFile) -> Result<Vec<GaussianState>> {
    p.states
        .iter()
        .enumerate()
        .map(|(i, s)| gaussian_state(s, &format!("states[{i}]")))
        .collect()
}

fn theorem_rows(r: &gaussian::TheoremReport) -> Vec<Vec<String>> {
    r.pairs
        .iter()
        .map(|q| {
            vec![
                format!("{:?}", r.kind).to_lowercase(),
                q.i.to_string(),
                q.j.to_string(),
                fmt(q.cos_theta),
                fmt_opt(q.rhs),
                fmt_opt(q.margin),
                fmt_opt(q.exact_rhs),
                fmt(q.distance_margin),
                q.bound_satisfied.to_string(),
                q.satisfied.to_string(),
                q.degenerate.to_string(),
            ]
        })
        .collect()
}

fn run_theorem(p: &ProblemFile, w: &mut Vec<String>) -> Result<(Value, Value, Option<Csv>)> {
    let states = gaussian_states(p)?;
    if p.gains.len() != states.len() {
        return Err(schema("gains", "one gain per state"));
    }
    let mut v = Map::new();
    let mut rows = Vec::new();
    let mut tables = Map::new();
    if matches!(p.params.check, TheoremMode::Theorem | TheoremMode::Both) {
        let r = gaussian::theorem_check(&states, &p.gains)?;
        v.insert("theorem_satisfied".into(), json!(r.satisfied));
        rows.extend(theorem_rows(&r));
        tables.insert(
            "theorem".into(),
            serde_json::to_value(&r).expect("report serializes"),
        );
    }
    if matches!(p.params.check, TheoremMode::Corollary | TheoremMode::Both) {
        match gaussian::corollary_check(&states, &p.gains) {
            Ok(r) => {
                v.insert("corollary_satisfied".into(), json!(r.satisfied));
                rows.extend(theorem_rows(&r));
                tables.insert(
                    "corollary".into(),
                    serde_json::to_value(&r).expect("report serializes"),
                );
            }
            Err(e @ GaussianError::TargetAmplitudeMismatch { .. })
                if p.params.check == TheoremMode::Both =>
            {
                w.push(format!("corollary skipped: {e}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let header = vec![
        "check",
        "i",
        "j",
        "cos_theta",
        "rhs",
        "margin",
        "exact_rhs",
        "distance_margin",
        "bound_satisfied",
        "satisfied",
        "degenerate",
    ];
    Ok((
        Value::Object(v),
        Value::Object(tables),
        Some((header, rows)),
    ))
}

fn run_gain_probability(
    p: &ProblemFile,
    _w: &mut Vec<String>,
) -> Result<(Value, Value, Option<Csv>)> {
    let pr = &p.params;
    let states = gaussian_states(p)?;
    let distance = match pr.distance {
        Some(d) => d,
        None if states.len() >= 2 => gaussian::phase_distance(&states[0], &states[1]),
        None => {
            return Err(schema(
                "params.distance",
                "pair distance, or at least two states",
            ))
        }
    };
    let mut v = Map::new();
    v.insert("distance".into(), json!(distance));
    if let (Some(c), Some(ratio)) = (pr.overlap_c, pr.ratio_v) {
        let model = GainProbabilityModel::new(c, ratio, distance)?;
        v.insert(
            "min_gain".into(),
            serde_json::to_value(gaussian::min_gain(&model)?).expect("serializes"),
        );
    }
    if let (Some(eps), Some(kappa)) = (pr.epsilon, pr.kappa) {
        let d_min = match pr.d_min {
            Some(d) => d,
            None => states
                .iter()
                .map(GaussianState::amplitude)
                .fold(f64::INFINITY, f64::min),
        };
        v.insert("d_min".into(), json!(d_min));
        v.insert(
            "threshold_gain".into(),
            json!(gaussian::min_gain_threshold(eps, kappa, d_min)?),
        );
    }
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &g in &pr.gain_grid {
        let f = gaussian::gain_probability_f(g, distance)?;
        rows.push(vec![fmt(g), fmt(f)]);
        table.push(json!({ "g": g, "f": f }));
    }
    let csv = (!rows.is_empty()).then(|| (vec!["g", "f"], rows));
    Ok((Value::Object(v), json!({ "f": table }), csv))
}

fn run_homodyne(p: &ProblemFile, _w: &mut Vec<String>) -> Result<(Value, Value, Option<Csv>)> {
    let pr = &p.params;
    let b = if pr.b.is_empty() {
        vec![1.0]
    } else {
        pr.b.clone()
    };
    let delta = if pr.delta.is_empty() {
        vec![std::f64::consts::FRAC_PI_6]
    } else {
        pr.delta.clone()
    };
    let rows = homodyne::sweep(&b, pr.c, &delta, pr.trials, pr.seed, pr.shards)?;
    let within = rows
        .iter()
        .filter(|r| (r.emp_mean - r.mean).abs() <= 5.0 * r.emp_std / (r.trials as f64).sqrt())
        .count();
    // sensitivity must fall as |b| grows at every phase
    let mut decreasing = true;
    for &d in &delta {
        let mut series: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.delta == d)
            .filter_map(|r| r.sensitivity.map(|s| (r.b, s)))
            .collect();
        series.sort_by(|x, y| x.0.total_cmp(&y.0));
        decreasing &= series
            .windows(2)
            .all(|w| w[0].0 == w[1].0 || w[1].1 < w[0].1);
    }
    let v = json!({
        "points": rows.len(),
        "within_five_sigma": within,
        "sensitivity_decreasing": decreasing,
    });
    let header = vec![
        "b",
        "c",
        "delta",
        "mean",
        "std",
        "sensitivity",
        "emp_mean",
        "emp_std",
        "trials",
        "seed",
    ];
    let csv_rows = rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.b),
                fmt(r.c),
                fmt(r.delta),
                fmt(r.mean),
                fmt(r.std),
                fmt_opt(r.sensitivity),
                fmt(r.emp_mean),
                fmt(r.emp_std),
                r.trials.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    Ok((v, json!({ "sweep": rows }), Some((header, csv_rows))))
}

fn run_channel(p: &ProblemFile, w: &mut Vec<String>) -> Result<(Value, Value, Option<Csv>)> {
    let pr = &p.params;
    let states = gaussian_states(p)?;
    if states.len() != 2 {
        return Err(schema("states", "exactly two states"));
    }
    pr.channel.validate()?;
    let gain = match p.gains.as_slice() {
        [] => 1.0,
        [g, rest @ ..] if rest.iter().all(|x| x == g) => *g,
        _ => return Err(schema("gains", "a uniform gain")),
    };
    if !(pr.t_max > 0.0 && pr.t_max.is_finite()) {
        return Err(schema("params.t_max", "positive number"));
    }
    let times = channel::time_grid(0.0, pr.t_max, pr.dt);
    let rows = channel::compare_trajectories(&states[0], &states[1], gain, &pr.channel, &times)?;
    let mut v = Map::new();
    v.insert("markovian".into(), json!(pr.channel.is_markovian()));
    v.insert("initial_distance".into(), json!(rows[0].d_plain));
    v.insert(
        "amplified_exceeds_plain".into(),
        json!(rows.iter().all(|r| r.d_amplified >= r.d_plain)),
    );
    let revivals = rows.iter().filter(|r| r.chi_plain > 0.0).count();
    v.insert("positive_chi_points".into(), json!(revivals));
    if let Some(threshold) = pr.threshold {
        if pr.channel.is_constant_rate() {
            let h =
                channel::detection_horizon(&states[0], &states[1], gain, &pr.channel, threshold)?;
            v.insert(
                "horizons".into(),
                serde_json::to_value(h).expect("serializes"),
            );
        } else {
            w.push("detection horizons need a constant-rate channel; skipped".into());
        }
    }
    let header = vec!["t", "D_plain", "D_amplified", "chi_plain", "chi_amplified"];
    let csv_rows = rows
        .iter()
        .map(|r| {
            vec![
                fmt(r.t),
                fmt(r.d_plain),
                fmt(r.d_amplified),
                fmt(r.chi_plain),
                fmt(r.chi_amplified),
            ]
        })
        .collect();
    Ok((
        Value::Object(v),
        json!({ "trajectory": rows }),
        Some((header, csv_rows)),
    ))
}

fn tolerances(p: &ProblemFile) -> Value {
    let mut t = Map::new();
    match p.task {
        Task::Feasibility | Task::Synthesize | Task::Classify => {
            t.insert("psd".into(), json!(p.params.tol));
            t.insert(
                "penalty_threshold".into(),
                json!(feasibility::PENALTY_THRESHOLD),
            );
            t.insert("state_normalization".into(), json!(state::STATE_TOL));
            t.insert("truncation_tail".into(), json!(state::TRUNCATION_TAIL));
            if p.task == Task::Synthesize {
                t.insert("probability".into(), json!(kraus::PROBABILITY_TOL));
                t.insert("fidelity".into(), json!(kraus::FIDELITY_TOL));
                t.insert("completeness".into(), json!(kraus::COMPLETENESS_TOL));
                t.insert("rank".into(), json!(kraus::DEFAULT_RANK_TOL));
            }
            if p.task == Task::Classify {
                t.insert("gain".into(), json!(classify::GAIN_TOL));
                t.insert("noiseless".into(), json!(classify::NOISELESS_TOL));
                t.insert("linear".into(), json!(classify::LINEAR_TOL));
            }
        }
        Task::Theorem => {
            t.insert("cos".into(), json!(gaussian::COS_TOL));
            t.insert("amplitude".into(), json!(gaussian::AMPLITUDE_TOL));
            t.insert("phase_floor".into(), json!(gaussian::PHASE_FLOOR));
        }
        Task::GainProbability => {
            t.insert("uncertainty".into(), json!(gaussian::UNCERTAINTY_TOL));
        }
        Task::Homodyne => {
            t.insert("agreement_sigmas".into(), json!(5.0));
        }
        Task::Channel => {
            t.insert("dt".into(), json!(p.params.dt));
        }
    }
    Value::Object(t)
}

pub fn run_task(problem: &ProblemFile) -> Result<Report> {
    let mut warnings = Vec::new();
    let (verdicts, tables, csv) = match problem.task {
        Task::Feasibility => run_feasibility(problem, &mut warnings)?,
        Task::Synthesize => run_synthesize(problem, &mut warnings)?,
        Task::Classify => run_classify(problem, &mut warnings)?,
        Task::Theorem => run_theorem(problem, &mut warnings)?,
        Task::GainProbability => run_gain_probability(problem, &mut warnings)?,
        Task::Homodyne => run_homodyne(problem, &mut warnings)?,
        Task::Channel => run_channel(problem, &mut warnings)?,
    };
    Ok(Report {
        task: problem.task,
        problem: serde_json::to_value(problem).expect("problem serializes"),
        verdicts,
        tables,
        provenance: Provenance {
            problem_sha256: problem_hash(problem),
            seed: problem.params.seed,
            library_version: LIBRARY_VERSION.to_string(),
        },
        tolerances: tolerances(problem),
        warnings,
        csv,
    })
}
