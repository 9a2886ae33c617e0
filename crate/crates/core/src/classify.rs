//! Gains, noiselessness and the deterministic/linear/noiseless taxonomy.

use serde::Serialize;
use thiserror::Error;

use crate::feasibility::{self, CertificateMethod, FeasibilityError, SearchOptions, SearchOutcome};
use crate::state::{self, DensityMatrix, Observable, PureState, QuantumState, StateError};

pub const GAIN_TOL: f64 = 1e-6;
pub const NOISELESS_TOL: f64 = 1e-8;
/// Relative tolerance for calling a set of gains equal.
pub const LINEAR_TOL: f64 = 1e-9;
pub const MONOTONICITY_SLACK: f64 = 1e-9;
const SIGNAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("input expectation {0:e} is too small to define a gain")]
    ZeroInputSignal(f64),
    #[error(
        "state {state}, observable {observable}: output {output} is not {gain} x input {input}"
    )]
    GainInconsistent {
        state: usize,
        observable: usize,
        input: f64,
        output: f64,
        gain: f64,
    },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid gain {0}")]
    InvalidGain(f64),
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
}

pub type Result<T> = std::result::Result<T, ClassifyError>;

/// Inputs, targets, gains and success probabilities of an amplification task.
#[derive(Debug, Clone)]
pub struct AmplificationSpec {
    inputs: Vec<PureState>,
    targets: Vec<PureState>,
    gains: Vec<f64>,
    probs: Vec<f64>,
    observables: Vec<Observable>,
}

fn gain_matches(input: f64, output: f64, g: f64) -> bool {
    (output - g * input).abs() <= GAIN_TOL * output.abs().max(1.0)
}

impl AmplificationSpec {
    /// Validates sizes and, for every declared observable, that each target
    /// carries `g_i` times the input expectation. An empty observable list
    /// describes a bare state transformation and skips the gain check.
    pub fn new(
        inputs: Vec<PureState>,
        targets: Vec<PureState>,
        gains: Vec<f64>,
        probs: Vec<f64>,
        observables: Vec<Observable>,
    ) -> Result<Self> {
        let n = inputs.len();
        if n == 0 {
            return Err(StateError::EmptySet.into());
        }
        if targets.len() != n || gains.len() != n || probs.len() != n {
            return Err(ClassifyError::LengthMismatch(format!(
                "{n} inputs, {} targets, {} gains, {} probs",
                targets.len(),
                gains.len(),
                probs.len()
            )));
        }
        let dim = inputs[0].dim();
        for s in inputs.iter().chain(&targets) {
            if s.dim() != dim {
                return Err(StateError::DimensionMismatch {
                    left: dim,
                    right: s.dim(),
                }
                .into());
            }
        }
        if let Some(&g) = gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(ClassifyError::InvalidGain(g));
        }
        if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ClassifyError::InvalidProbability(p));
        }
        for (a, obs) in observables.iter().enumerate() {
            if obs.dim() != dim {
                return Err(StateError::DimensionMismatch {
                    left: dim,
                    right: obs.dim(),
                }
                .into());
            }
            for i in 0..n {
                let input = state::expectation(obs, &inputs[i])?;
                let output = state::expectation(obs, &targets[i])?;
                if !gain_matches(input, output, gains[i]) {
                    return Err(ClassifyError::GainInconsistent {
                        state: i,
                        observable: a,
                        input,
                        output,
                        gain: gains[i],
                    });
                }
            }
        }
        Ok(Self {
            inputs,
            targets,
            gains,
            probs,
            observables,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[PureState] {
        &self.inputs
    }

    pub fn targets(&self) -> &[PureState] {
        &self.targets
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }
}

pub fn gain<A, B>(obs: &Observable, input: &A, output: &B) -> Result<f64>
where
    A: QuantumState + ?Sized,
    B: QuantumState + ?Sized,
{
    let before = state::expectation(obs, input)?;
    if before.abs() <= SIGNAL_FLOOR {
        return Err(ClassifyError::ZeroInputSignal(before));
    }
    Ok(state::expectation(obs, output)? / before)
}

pub fn is_noiseless<A, B>(obs: &Observable, input: &A, output: &B, tol: f64) -> Result<bool>
where
    A: QuantumState + ?Sized,
    B: QuantumState + ?Sized,
{
    if input.dim() != output.dim() {
        return Err(StateError::DimensionMismatch {
            left: input.dim(),
            right: output.dim(),
        }
        .into());
    }
    let before = state::fluctuation(obs, input)?;
    let after = state::fluctuation(obs, output)?;
    Ok((after - before).abs() <= tol)
}

/// `Tr{A^2 (sigma - rho)} - (g^2 - 1) Tr(A rho)^2`, which equals the change
/// in variance whenever `<A>_sigma = g <A>_rho`.
pub fn noiseless_residual<A, B>(obs: &Observable, input: &A, output: &B, g: f64) -> Result<f64>
where
    A: QuantumState + ?Sized,
    B: QuantumState + ?Sized,
{
    let before = state::expectation(obs, input)?;
    let after = state::expectation(obs, output)?;
    if !gain_matches(before, after, g) {
        return Err(ClassifyError::GainInconsistent {
            state: 0,
            observable: 0,
            input: before,
            output: after,
            gain: g,
        });
    }
    let sq = obs.squared();
    let second_in = state::expectation(&sq, input)?;
    let second_out = state::expectation(&sq, output)?;
    Ok(second_out - second_in - (g * g - 1.0) * before * before)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplifierClass {
    pub deterministic: bool,
    pub noiseless: bool,
    pub linear: bool,
    pub feasible: bool,
    /// Verdict of the Gram-matrix test alone, before the taxonomy rule.
    pub gram_feasible: bool,
    pub no_amplification: bool,
    /// One entry per declared observable.
    pub noiseless_per_observable: Vec<bool>,
    pub method: CertificateMethod,
    pub penalty: Option<f64>,
    pub notes: String,
}

fn gains_equal(gains: &[f64]) -> bool {
    let g0 = gains[0];
    gains
        .iter()
        .all(|g| (g - g0).abs() <= LINEAR_TOL * g0.abs().max(g.abs()).max(1.0))
}

/// Gram verdict for the spec: closed form for two states with a common
/// success probability, penalty search otherwise.
pub fn gram_verdict(
    spec: &AmplificationSpec,
    opts: &SearchOptions,
) -> Result<(bool, CertificateMethod, Option<f64>)> {
    let g_pi = state::gram_matrix(spec.inputs())?;
    let g_xi = state::gram_matrix(spec.targets())?;
    if spec.len() == 2 && spec.probs[0] == spec.probs[1] {
        let cert = feasibility::solve_two_state(
            g_pi.entries[(0, 1)],
            g_xi.entries[(0, 1)],
            spec.probs[0],
        )?;
        return Ok((cert.feasible, CertificateMethod::AnalyticTwoState, None));
    }
    let outcome = feasibility::search_omega(&g_pi, &g_xi, spec.probs(), opts)?;
    let penalty = Some(outcome.penalty());
    Ok((
        matches!(outcome, SearchOutcome::Found { .. }),
        CertificateMethod::PenaltySearch,
        penalty,
    ))
}

pub fn classify(spec: &AmplificationSpec, opts: &SearchOptions) -> Result<AmplifierClass> {
    let deterministic = spec.probs.iter().all(|&p| p == 1.0);
    let linear = gains_equal(&spec.gains);
    let no_amplification = spec.gains.iter().all(|&g| (g - 1.0).abs() <= LINEAR_TOL);
    let mut noiseless_per_observable = Vec::with_capacity(spec.observables.len());
    for obs in &spec.observables {
        let mut ok = true;
        for (psi, phi) in spec.inputs.iter().zip(&spec.targets) {
            ok &= is_noiseless(obs, psi, phi, NOISELESS_TOL)?;
        }
        noiseless_per_observable.push(ok);
    }
    let noiseless =
        !noiseless_per_observable.is_empty() && noiseless_per_observable.iter().all(|&b| b);

    let (gram_feasible, method, penalty) = gram_verdict(spec, opts)?;
    let mut notes = Vec::new();
    let mut feasible = gram_feasible;
    let amplifying = spec.gains.iter().any(|&g| g > 1.0 + LINEAR_TOL);
    if deterministic && linear && noiseless && amplifying {
        feasible = false;
        notes.push(
            "a deterministic linear amplifier with fixed gain above 1 cannot be noiseless"
                .to_string(),
        );
        if gram_feasible {
            notes.push("the Gram test alone did not exclude this transformation".to_string());
        }
    }
    if no_amplification {
        notes.push("all gains are 1: no amplification".to_string());
    }
    if spec.observables.is_empty() {
        notes.push("no observables declared; noiselessness not assessed".to_string());
    }
    if !feasible && !(deterministic && linear && noiseless && amplifying) {
        notes.push("no admissible Omega: the success branch cannot be realized".to_string());
    }
    Ok(AmplifierClass {
        deterministic,
        noiseless,
        linear,
        feasible,
        gram_feasible,
        no_amplification,
        noiseless_per_observable,
        method,
        penalty,
        notes: notes.join("; "),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDistance {
    pub before: f64,
    pub after: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub pairs: Vec<PairDistance>,
    pub violations: usize,
}

/// Trace distances of aligned state pairs before and after a map.
pub fn monotonicity_check(
    before: &[(DensityMatrix, DensityMatrix)],
    after: &[(DensityMatrix, DensityMatrix)],
) -> Result<MonotonicityReport> {
    if before.len() != after.len() {
        return Err(ClassifyError::LengthMismatch(format!(
            "{} pairs before, {} after",
            before.len(),
            after.len()
        )));
    }
    let mut pairs = Vec::with_capacity(before.len());
    for ((a, b), (c, d)) in before.iter().zip(after) {
        let d_before = state::trace_distance(a, b)?;
        let d_after = state::trace_distance(c, d)?;
        pairs.push(PairDistance {
            before: d_before,
            after: d_after,
            ok: d_before + MONOTONICITY_SLACK >= d_after,
        });
    }
    let violations = pairs.iter().filter(|p| !p.ok).count();
    Ok(MonotonicityReport { pairs, violations })
}
