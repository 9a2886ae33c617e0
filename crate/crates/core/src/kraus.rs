//! Success-branch Kraus operators from a feasible `Omega`.
//!
//! With `Omega` factored into coefficients `c[k, i]` and a biorthogonal dual
//! set `<dual_i|psi_j> = gamma_i delta_ij`, the operators
//!
//! ```text
//! M_k = sum_i (c[k, i] / gamma_i) |phi_i><dual_i|
//! ```
//!
//! satisfy `M_k |psi_i> = c[k, i] |phi_i>`. Duals are taken inside the span of
//! the inputs, so every `M_k` annihilates the orthogonal complement and
//! `I - sum_k M_k^dag M_k` is the failure POVM element.

use num_complex::Complex64;
use thiserror::Error;

use crate::classify::AmplificationSpec;
use crate::feasibility::OmegaMatrix;
use crate::linalg::{self, CMatrix, CVector, ZERO};
use crate::state::{DensityMatrix, PureState, QuantumState};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;
pub const PROBABILITY_TOL: f64 = 1e-8;
pub const FIDELITY_TOL: f64 = 1e-8;
pub const COMPLETENESS_TOL: f64 = 1e-9;
const GAMMA_FLOOR: f64 = 1e-10;
const INDEPENDENCE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KrausError {
    #[error("states are linearly dependent (Gram minimum eigenvalue {0:e})")]
    LinearlyDependentSet(f64),
    #[error("omega is not positive semidefinite (minimum eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dual normalization gamma_{0} vanishes")]
    ZeroGamma(usize),
    #[error("state set is empty")]
    EmptySet,
}

pub type Result<T> = std::result::Result<T, KrausError>;

/// Vectors `|dual_i>` with `<dual_i|psi_j> = gammas[i] * delta_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBasis {
    pub duals: Vec<CVector>,
    pub gammas: Vec<Complex64>,
}

impl DualBasis {
    /// Largest deviation of `<dual_i|psi_j>` from `gamma_i delta_ij`.
    pub fn biorthogonality_residual(&self, states: &[PureState]) -> f64 {
        let mut worst = 0.0f64;
        for (i, dual) in self.duals.iter().enumerate() {
            for (j, psi) in states.iter().enumerate() {
                let expected = if i == j { self.gammas[i] } else { ZERO };
                worst = worst.max((dual.dotc(psi.amplitudes()) - expected).norm());
            }
        }
        worst
    }
}

fn column_matrix(states: &[PureState]) -> Result<CMatrix> {
    let first = states.first().ok_or(KrausError::EmptySet)?;
    let dim = first.dim();
    let mut m = CMatrix::zeros(dim, states.len());
    for (i, s) in states.iter().enumerate() {
        if s.dim() != dim {
            return Err(KrausError::ShapeMismatch(format!(
                "state {i} has dim {} not {dim}",
                s.dim()
            )));
        }
        m.set_column(i, s.amplitudes());
    }
    Ok(m)
}

/// Dual set inside `span{psi_i}`, normalized so every `gamma_i = 1`.
pub fn dual_basis(states: &[PureState]) -> Result<DualBasis> {
    let psi = column_matrix(states)?;
    // overlaps[(i, j)] = <psi_i|psi_j>
    let overlaps = psi.adjoint() * &psi;
    let min = linalg::min_eigenvalue(&overlaps);
    if min <= INDEPENDENCE_FLOOR {
        return Err(KrausError::LinearlyDependentSet(min));
    }
    let inverse = overlaps
        .try_inverse()
        .ok_or(KrausError::LinearlyDependentSet(min))?;
    let duals_m = &psi * inverse;
    let duals = (0..states.len())
        .map(|i| duals_m.column(i).into_owned())
        .collect::<Vec<_>>();
    let gammas = duals
        .iter()
        .zip(states)
        .map(|(d, s)| d.dotc(s.amplitudes()))
        .collect();
    Ok(DualBasis { duals, gammas })
}

/// Coefficient matrix `C` (rows = Kraus index) with
/// `sum_k conj(c[k, j]) c[k, i] = Omega[(i, j)]`, so that
/// `M_k |psi_i> = c[k, i] |phi_i>` reproduces `G_in = G_out o Omega + K`.
/// Eigenvalues at or below `rank_tol * lambda_max` are dropped.
pub fn factor_omega(omega: &OmegaMatrix, rank_tol: f64) -> Result<CMatrix> {
    let n = omega.len();
    if n == 0 {
        return Err(KrausError::EmptySet);
    }
    let (values, vectors) = linalg::hermitian_eigen(omega.entries());
    let lambda_max = values.last().copied().unwrap_or(0.0);
    let min = values[0];
    if min < -rank_tol * lambda_max.abs().max(1.0) {
        return Err(KrausError::NotPsd(min));
    }
    let cut = rank_tol * lambda_max;
    let kept: Vec<usize> = (0..n)
        .filter(|&k| values[k] > cut && values[k] > 0.0)
        .collect();
    let mut c = CMatrix::zeros(kept.len(), n);
    // row k = sqrt(lambda_k) v_k^T, hence C^dag C = conj(Omega) = Omega^T
    for (row, &k) in kept.iter().rev().enumerate() {
        let s = values[k].sqrt();
        for i in 0..n {
            c[(row, i)] = vectors[(i, k)] * s;
        }
    }
    Ok(c)
}

/// Largest entry of `(C^dag C)^T - Omega`.
pub fn omega_reconstruction_residual(c: &CMatrix, omega: &OmegaMatrix) -> f64 {
    let product = c.adjoint() * c;
    linalg::max_abs_diff(&product.transpose(), omega.entries())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub operators: Vec<CMatrix>,
    pub coeffs: CMatrix,
}

impl KrausSet {
    pub fn dim_in(&self) -> usize {
        self.operators.first().map_or(0, |m| m.ncols())
    }

    pub fn dim_out(&self) -> usize {
        self.operators.first().map_or(0, |m| m.nrows())
    }

    /// `sum_k M_k^dag M_k`.
    pub fn completeness_operator(&self) -> CMatrix {
        let d = self.dim_in();
        self.operators
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, m| acc + m.adjoint() * m)
    }

    /// `1 - lambda_max(sum_k M_k^dag M_k)`; nonnegative for a valid success branch.
    pub fn completeness_margin(&self) -> f64 {
        1.0 - linalg::max_eigenvalue(&self.completeness_operator())
    }

    /// Failure POVM element `I - sum_k M_k^dag M_k`.
    pub fn failure_element(&self) -> CMatrix {
        let d = self.dim_in();
        CMatrix::identity(d, d) - self.completeness_operator()
    }

    /// Unnormalized success-branch output `sum_k M_k rho M_k^dag`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dim_out();
        self.operators
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, m| acc + m * rho * m.adjoint())
    }

    pub fn apply_state<S: QuantumState + ?Sized>(&self, state: &S) -> CMatrix {
        self.apply(state.density().matrix())
    }
}

/// `M_k = sum_i (c[k, i] / gamma_i) |phi_i><dual_i|`.
pub fn build_kraus(c: &CMatrix, duals: &DualBasis, targets: &[PureState]) -> Result<KrausSet> {
    let n = duals.duals.len();
    if c.ncols() != n || targets.len() != n || duals.gammas.len() != n {
        return Err(KrausError::ShapeMismatch(format!(
            "coefficients {}x{}, {} duals, {} targets",
            c.nrows(),
            c.ncols(),
            n,
            targets.len()
        )));
    }
    if n == 0 {
        return Err(KrausError::EmptySet);
    }
    let dim_out = targets[0].dim();
    if let Some((i, t)) = targets.iter().enumerate().find(|(_, t)| t.dim() != dim_out) {
        return Err(KrausError::ShapeMismatch(format!(
            "target {i} has dim {} not {dim_out}",
            t.dim()
        )));
    }
    if let Some(i) = duals.gammas.iter().position(|g| g.norm() <= GAMMA_FLOOR) {
        return Err(KrausError::ZeroGamma(i));
    }
    let dim_in = duals.duals[0].len();
    let projectors: Vec<CMatrix> = (0..n)
        .map(|i| {
            let g = duals.gammas[i];
            linalg::outer(targets[i].amplitudes(), &duals.duals[i]).map(|z| z / g)
        })
        .collect();
    let operators = (0..c.nrows())
        .map(|k| {
            projectors
                .iter()
                .enumerate()
                .fold(CMatrix::zeros(dim_out, dim_in), |acc, (i, p)| {
                    acc + p * c[(k, i)]
                })
        })
        .collect();
    Ok(KrausSet {
        operators,
        coeffs: c.clone(),
    })
}

/// Full pipeline: duals of the inputs, factorization of `Omega`, operators.
pub fn synthesize(
    inputs: &[PureState],
    targets: &[PureState],
    omega: &OmegaMatrix,
) -> Result<KrausSet> {
    let duals = dual_basis(inputs)?;
    let c = factor_omega(omega, DEFAULT_RANK_TOL)?;
    build_kraus(&c, &duals, targets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVerification {
    pub index: usize,
    pub expected_probability: f64,
    /// `sum_k |c[k, i]|^2`.
    pub coefficient_probability: f64,
    /// `sum_k ||M_k psi_i||^2`.
    pub success_probability: f64,
    /// `<phi_i| sigma_i |phi_i>` for the normalized success output.
    pub fidelity: f64,
    /// `max_k ||M_k psi_i - c[k, i] phi_i||`.
    pub action_residual: f64,
    /// `max_k ||M_k rho_i M_k^dag - |c[k, i]|^2 sigma_i||`.
    pub conjugation_residual: f64,
    pub probability_ok: bool,
    pub fidelity_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub states: Vec<StateVerification>,
    pub completeness_margin: f64,
    pub completeness_ok: bool,
    pub passed: bool,
}

pub fn verify_kraus(kraus: &KrausSet, spec: &AmplificationSpec) -> Result<VerificationReport> {
    let inputs = spec.inputs();
    let targets = spec.targets();
    if kraus.coeffs.ncols() != inputs.len() {
        return Err(KrausError::ShapeMismatch(format!(
            "{} coefficient columns for {} inputs",
            kraus.coeffs.ncols(),
            inputs.len()
        )));
    }
    if kraus.operators.len() != kraus.coeffs.nrows() {
        return Err(KrausError::ShapeMismatch(
            "operator count differs from coefficient rows".into(),
        ));
    }
    if let Some(psi) = inputs.first() {
        if psi.dim() != kraus.dim_in() || targets[0].dim() != kraus.dim_out() {
            return Err(KrausError::ShapeMismatch(format!(
                "operators are {}x{}, states {} -> {}",
                kraus.dim_out(),
                kraus.dim_in(),
                psi.dim(),
                targets[0].dim()
            )));
        }
    }

    let mut states = Vec::with_capacity(inputs.len());
    for (i, (psi, phi)) in inputs.iter().zip(targets).enumerate() {
        let expected = spec.probs()[i];
        let coefficient_probability: f64 =
            kraus.coeffs.column(i).iter().map(|z| z.norm_sqr()).sum();
        let mut success_probability = 0.0;
        let mut action_residual = 0.0f64;
        let mut conjugation_residual = 0.0f64;
        let sigma = phi.to_density();
        let rho = psi.to_density();
        for (k, m) in kraus.operators.iter().enumerate() {
            let out = m * psi.amplitudes();
            success_probability += out.norm_squared();
            let c = kraus.coeffs[(k, i)];
            action_residual = action_residual.max((&out - phi.amplitudes() * c).norm());
            let conj = m * rho.matrix() * m.adjoint();
            conjugation_residual = conjugation_residual.max(linalg::max_abs_diff(
                &conj,
                &sigma.matrix().scale(c.norm_sqr()),
            ));
        }
        let output = kraus.apply(rho.matrix());
        let fidelity = if success_probability > 0.0 {
            phi.amplitudes().dotc(&(&output * phi.amplitudes())).re / success_probability
        } else {
            0.0
        };
        let probability_ok = (success_probability - expected).abs() <= PROBABILITY_TOL
            && (coefficient_probability - expected).abs() <= PROBABILITY_TOL;
        // a branch that never fires has no output to compare
        let fidelity_ok = expected == 0.0 || fidelity >= 1.0 - FIDELITY_TOL;
        states.push(StateVerification {
            index: i,
            expected_probability: expected,
            coefficient_probability,
            success_probability,
            fidelity,
            action_residual,
            conjugation_residual,
            probability_ok,
            fidelity_ok,
        });
    }
    let completeness_margin = kraus.completeness_margin();
    let completeness_ok = completeness_margin >= -COMPLETENESS_TOL;
    let passed = completeness_ok && states.iter().all(|s| s.probability_ok && s.fidelity_ok);
    Ok(VerificationReport {
        states,
        completeness_margin,
        completeness_ok,
        passed,
    })
}

/// Success statistics for a mixed input; informational only, since the
/// operators are fixed by their action on the pure input set.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedInputReport {
    pub success_probability: f64,
    pub fidelity: f64,
    /// `||sum_k M_k rho M_k^dag - P_success sigma||_max`.
    pub proportionality_residual: f64,
}

pub fn mixed_input_report(
    kraus: &KrausSet,
    rho: &DensityMatrix,
    target: &PureState,
) -> Result<MixedInputReport> {
    if rho.dim() != kraus.dim_in() || target.dim() != kraus.dim_out() {
        return Err(KrausError::ShapeMismatch(
            "mixed input does not fit the operators".into(),
        ));
    }
    let out = kraus.apply(rho.matrix());
    let success_probability = linalg::trace(&out).re;
    let fidelity = if success_probability > 0.0 {
        target.amplitudes().dotc(&(&out * target.amplitudes())).re / success_probability
    } else {
        0.0
    };
    let sigma = target.to_density();
    let proportionality_residual =
        linalg::max_abs_diff(&out, &sigma.matrix().scale(success_probability));
    Ok(MixedInputReport {
        success_probability,
        fidelity,
        proportionality_residual,
    })
}

/// Largest deviation, over all pairs, of
/// `<psi_j|psi_i> - sum_k conj(c[k, j]) c[k, i] <phi_j|phi_i>` from `K[(i, j)]`.
pub fn gram_reconstruction_residual(
    kraus: &KrausSet,
    inputs: &[PureState],
    targets: &[PureState],
    k: &CMatrix,
) -> Result<f64> {
    let n = inputs.len();
    if targets.len() != n || kraus.coeffs.ncols() != n || k.nrows() != n || k.ncols() != n {
        return Err(KrausError::ShapeMismatch(
            "gram reconstruction inputs disagree in size".into(),
        ));
    }
    let c = &kraus.coeffs;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let lhs = inputs[j].amplitudes().dotc(inputs[i].amplitudes());
            let omega_ij: Complex64 = (0..c.nrows()).map(|r| c[(r, j)].conj() * c[(r, i)]).sum();
            let out = targets[j].amplitudes().dotc(targets[i].amplitudes());
            worst = worst.max((lhs - omega_ij * out - k[(i, j)]).norm());
        }
    }
    Ok(worst)
}
