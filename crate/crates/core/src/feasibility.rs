//! Gram-matrix feasibility of a state transformation.
//!
//! A set of pure inputs `{psi_i}` can be mapped to targets `{phi_i}` with
//! success probabilities `p_i` iff there is a Hermitian `Omega` with
//!
//! * `Omega >= 0`,
//! * `diag(Omega) = p`,
//! * `K = G_in - G_out o Omega >= 0` (`o` is the entrywise product),
//!
//! where `G[(i, j)] = <psi_j|psi_i>`. `Omega[(i, j)] = sqrt(p_i p_j) <mu_j|mu_i>`
//! collects the success-branch ancilla overlaps and `K` the failure branch.
//!
//! Two states with equal probabilities have a closed-form answer
//! ([`solve_two_state`]). Larger sets go through [`search_omega`], a seeded
//! multi-start penalty search. A failed search is evidence of infeasibility,
//! not a proof.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, CMatrix, ONE, ZERO};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::state::GramMatrix;

/// Default PSD tolerance, scaled by `max(1, trace)` of the matrix under test.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Penalty below which a search candidate counts as feasible.
pub const PENALTY_THRESHOLD: f64 = 1e-12;
pub const DEFAULT_RESTARTS: usize = 64;
pub const MAX_SEARCH_STATES: usize = 8;
const ENTRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeasibilityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("overlap magnitude {0} exceeds 1")]
    InvalidOverlap(f64),
    #[error("omega is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("omega diagonal entry {index} is {found}, expected {expected}")]
    DiagonalMismatch {
        index: usize,
        found: f64,
        expected: f64,
    },
    #[error("|omega[{i},{j}]| = {magnitude} exceeds sqrt(p_i p_j) = {bound}")]
    CauchySchwarz {
        i: usize,
        j: usize,
        magnitude: f64,
        bound: f64,
    },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("search supports at most {MAX_SEARCH_STATES} states, got {0}")]
    NTooLarge(usize),
    #[error("state set is empty")]
    EmptySet,
}

pub type Result<T> = std::result::Result<T, FeasibilityError>;

/// Hermitian `Omega` together with the success probabilities on its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMatrix {
    entries: CMatrix,
    prob_diag: Vec<f64>,
}

impl OmegaMatrix {
    pub fn new(entries: CMatrix, probs: Vec<f64>) -> Result<Self> {
        let n = probs.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(FeasibilityError::DimensionMismatch {
                left: entries.nrows(),
                right: n,
            });
        }
        validate_probs(&probs)?;
        let defect = linalg::hermitian_defect(&entries);
        if defect > ENTRY_TOL {
            return Err(FeasibilityError::NotHermitian(defect));
        }
        for (i, &p) in probs.iter().enumerate() {
            let d = entries[(i, i)];
            if (d.re - p).abs() > ENTRY_TOL || d.im.abs() > ENTRY_TOL {
                return Err(FeasibilityError::DiagonalMismatch {
                    index: i,
                    found: d.re,
                    expected: p,
                });
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let bound = (probs[i] * probs[j]).sqrt();
                let magnitude = entries[(i, j)].norm();
                if magnitude > bound + ENTRY_TOL {
                    return Err(FeasibilityError::CauchySchwarz {
                        i,
                        j,
                        magnitude,
                        bound,
                    });
                }
            }
        }
        Ok(Self {
            entries,
            prob_diag: probs,
        })
    }

    /// Builds `Omega` from the diagonal and the strict upper triangle; the lower
    /// triangle is filled by conjugation.
    fn from_upper(probs: &[f64], upper: &[Complex64]) -> CMatrix {
        let n = probs.len();
        let mut m = CMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            m[(i, i)] = Complex64::new(probs[i], 0.0);
            for j in (i + 1)..n {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k].conj();
                k += 1;
            }
        }
        m
    }

    /// Every entry equal to one: the deterministic, ancilla-free choice.
    pub fn all_ones(n: usize) -> Self {
        Self {
            entries: CMatrix::from_element(n, n, ONE),
            prob_diag: vec![1.0; n],
        }
    }

    /// `diag(p)`: success ancillas mutually orthogonal.
    pub fn diagonal(probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs)?;
        let n = probs.len();
        Ok(Self {
            entries: Self::from_upper(&probs, &vec![ZERO; n * n.saturating_sub(1) / 2]),
            prob_diag: probs,
        })
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn probs(&self) -> &[f64] {
        &self.prob_diag
    }

    pub fn len(&self) -> usize {
        self.prob_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob_diag.is_empty()
    }
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(FeasibilityError::InvalidProbability(p));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateMethod {
    AnalyticTwoState,
    PenaltySearch,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityCertificate {
    pub omega: OmegaMatrix,
    pub residual_k: CMatrix,
    pub min_eig_omega: f64,
    pub min_eig_k: f64,
    pub diag_ok: bool,
    pub feasible: bool,
    pub method: CertificateMethod,
    /// Base tolerance; each PSD test uses `tol * max(1, trace)`.
    pub tol: f64,
}

/// `K = G_in - G_out o Omega`.
pub fn residual_k(g_pi: &GramMatrix, g_xi: &GramMatrix, omega: &OmegaMatrix) -> Result<CMatrix> {
    let n = g_pi.len();
    for other in [g_xi.len(), omega.len()] {
        if other != n {
            return Err(FeasibilityError::DimensionMismatch {
                left: n,
                right: other,
            });
        }
    }
    Ok(&g_pi.entries - linalg::hadamard(&g_xi.entries, &omega.entries))
}

fn psd_threshold(m: &CMatrix, tol: f64) -> f64 {
    tol * linalg::trace(m).re.abs().max(1.0)
}

/// Evaluates the three conditions for a given `Omega`.
pub fn check_feasibility(
    g_pi: &GramMatrix,
    g_xi: &GramMatrix,
    omega: &OmegaMatrix,
    tol: f64,
) -> Result<FeasibilityCertificate> {
    if !(tol > 0.0) {
        return Err(FeasibilityError::InvalidTolerance(tol));
    }
    let k = residual_k(g_pi, g_xi, omega)?;
    let min_eig_omega = linalg::min_eigenvalue(&omega.entries);
    let min_eig_k = linalg::min_eigenvalue(&k);
    let diag_ok = omega
        .prob_diag
        .iter()
        .enumerate()
        .all(|(i, &p)| (omega.entries[(i, i)] - Complex64::new(p, 0.0)).norm() <= ENTRY_TOL);
    let feasible = diag_ok
        && min_eig_omega >= -psd_threshold(&omega.entries, tol)
        && min_eig_k >= -psd_threshold(&k, tol);
    Ok(FeasibilityCertificate {
        omega: omega.clone(),
        residual_k: k,
        min_eig_omega,
        min_eig_k,
        diag_ok,
        feasible,
        method: CertificateMethod::UserSupplied,
        tol,
    })
}

const OVERLAP_SLACK: f64 = 1e-12;

fn validate_overlap(z: Complex64) -> Result<f64> {
    let r = z.norm();
    if !(r <= 1.0 + OVERLAP_SLACK) {
        return Err(FeasibilityError::InvalidOverlap(r));
    }
    Ok(r.min(1.0))
}

/// Closed-form two-state solution with a common success probability `p`.
///
/// `s = <psi_2|psi_1>`, `t = <phi_2|phi_1>`. Feasible iff
/// `max(|s| - |t| p, 0) <= 1 - p`; the certificate carries the `Omega` that
/// minimizes `|s - t Omega_12|`.
pub fn solve_two_state(s: Complex64, t: Complex64, p: f64) -> Result<FeasibilityCertificate> {
    validate_overlap(s)?;
    let t_abs = validate_overlap(t)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(FeasibilityError::InvalidProbability(p));
    }
    let s_abs = s.norm();
    let scale = if t_abs * p > 0.0 {
        (s_abs / (t_abs * p)).min(1.0)
    } else {
        1.0
    };
    let direction = if t_abs > 0.0 {
        linalg::phase(s / t)
    } else {
        linalg::phase(s)
    };
    let w = direction * (p * scale);
    let omega = OmegaMatrix {
        entries: OmegaMatrix::from_upper(&[p, p], &[w]),
        prob_diag: vec![p, p],
    };
    let mut cert = check_feasibility(
        &GramMatrix::two_state(s),
        &GramMatrix::two_state(t),
        &omega,
        DEFAULT_TOL,
    )?;
    cert.method = CertificateMethod::AnalyticTwoState;
    Ok(cert)
}

/// Largest common success probability for the two-state task:
/// `min(1, (1 - |s|)/(1 - |t|))`, and 1 whenever `|s| <= |t|`.
pub fn max_success_probability(s: Complex64, t: Complex64) -> Result<f64> {
    let s_abs = validate_overlap(s)?;
    let t_abs = validate_overlap(t)?;
    if s_abs <= t_abs {
        return Ok(1.0);
    }
    // here |t| < |s| <= 1
    Ok(((1.0 - s_abs) / (1.0 - t_abs)).min(1.0))
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
    pub parallel: bool,
    /// Start restart 0 from the pairwise two-state optimum.
    pub heuristic_start: bool,
    pub max_evals: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            tol: DEFAULT_TOL,
            parallel: true,
            heuristic_start: true,
            max_evals: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found {
        certificate: FeasibilityCertificate,
        penalty: f64,
    },
    NotFound {
        best_penalty: f64,
        best_omega: CMatrix,
    },
}

impl SearchOutcome {
    pub fn penalty(&self) -> f64 {
        match self {
            SearchOutcome::Found { penalty, .. } => *penalty,
            SearchOutcome::NotFound { best_penalty, .. } => *best_penalty,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, SearchOutcome::Found { .. })
    }
}

struct PenaltyProblem<'a> {
    g_pi: &'a CMatrix,
    g_xi: &'a CMatrix,
    probs: &'a [f64],
}

impl PenaltyProblem<'_> {
    fn n(&self) -> usize {
        self.probs.len()
    }

    fn omega(&self, x: &[f64]) -> CMatrix {
        let upper: Vec<Complex64> = x
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        OmegaMatrix::from_upper(self.probs, &upper)
    }

    fn penalty_of(&self, omega: &CMatrix) -> f64 {
        let k = self.g_pi - linalg::hadamard(self.g_xi, omega);
        let a = (-linalg::min_eigenvalue(omega)).max(0.0);
        let b = (-linalg::min_eigenvalue(&k)).max(0.0);
        a * a + b * b
    }

    fn penalty(&self, x: &[f64]) -> f64 {
        self.penalty_of(&self.omega(x))
    }

    /// Pairwise two-state optimum for every off-diagonal entry.
    fn heuristic_start(&self) -> Vec<f64> {
        let n = self.n();
        let mut x = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for j in (i + 1)..n {
                let cap = (self.probs[i] * self.probs[j]).sqrt();
                let s = self.g_pi[(i, j)];
                let t = self.g_xi[(i, j)];
                let w = if t.norm() * cap > 0.0 {
                    linalg::phase(s / t) * (s.norm() / t.norm()).min(cap)
                } else {
                    linalg::phase(s) * cap
                };
                x.push(w.re);
                x.push(w.im);
            }
        }
        x
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.n();
        let mut x = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for j in (i + 1)..n {
                let cap = (self.probs[i] * self.probs[j]).sqrt();
                let r = cap * rng.random::<f64>().sqrt();
                let theta = rng.random::<f64>() * std::f64::consts::TAU;
                x.push(r * theta.cos());
                x.push(r * theta.sin());
            }
        }
        x
    }
}

struct Candidate {
    index: usize,
    penalty: f64,
    norm: f64,
    omega: CMatrix,
}

fn run_restart(problem: &PenaltyProblem, opts: &SearchOptions, index: usize) -> Candidate {
    let start = if index == 0 && opts.heuristic_start {
        problem.heuristic_start()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(index as u64);
        problem.random_start(&mut rng)
    };
    let scale = problem.probs.iter().cloned().fold(0.0, f64::max).max(1e-3);
    let nm = NelderMeadOptions {
        max_evals: opts.max_evals,
        initial_step: 0.1 * scale,
        ..Default::default()
    };
    let f = |x: &[f64]| problem.penalty(x);
    let mut best = nelder_mead(f, &start, &nm);
    if best.value > 0.0 {
        // one restart of the simplex around the incumbent
        let polish = NelderMeadOptions {
            initial_step: 1e-3 * scale,
            ..nm
        };
        let second = nelder_mead(f, &best.x, &polish);
        if second.value < best.value {
            best = second;
        }
    }
    let omega = problem.omega(&best.x);
    let norm = omega.norm();
    Candidate {
        index,
        penalty: best.value,
        norm,
        omega,
    }
}

/// Multi-start penalty search for `Omega` with `diag(Omega) = p`.
///
/// Minimizes `max(0, -lmin(Omega))^2 + max(0, -lmin(K))^2` from
/// `opts.restarts` starting points. Restart `k` draws its start from the
/// ChaCha stream `k` of `opts.seed`, so parallel and sequential runs return
/// the same result. Ties go to the smaller Frobenius norm, then the lower
/// restart index.
pub fn search_omega(
    g_pi: &GramMatrix,
    g_xi: &GramMatrix,
    probs: &[f64],
    opts: &SearchOptions,
) -> Result<SearchOutcome> {
    let n = g_pi.len();
    if n == 0 {
        return Err(FeasibilityError::EmptySet);
    }
    if g_xi.len() != n {
        return Err(FeasibilityError::DimensionMismatch {
            left: n,
            right: g_xi.len(),
        });
    }
    if probs.len() != n {
        return Err(FeasibilityError::DimensionMismatch {
            left: n,
            right: probs.len(),
        });
    }
    if n > MAX_SEARCH_STATES {
        return Err(FeasibilityError::NTooLarge(n));
    }
    if !(opts.tol > 0.0) {
        return Err(FeasibilityError::InvalidTolerance(opts.tol));
    }
    validate_probs(probs)?;

    let problem = PenaltyProblem {
        g_pi: &g_pi.entries,
        g_xi: &g_xi.entries,
        probs,
    };
    let restarts = opts.restarts.max(1);
    let candidates: Vec<Candidate> = if opts.parallel {
        (0..restarts)
            .into_par_iter()
            .map(|k| run_restart(&problem, opts, k))
            .collect()
    } else {
        (0..restarts)
            .map(|k| run_restart(&problem, opts, k))
            .collect()
    };
    let best = candidates
        .into_iter()
        .min_by(|a, b| {
            a.penalty
                .total_cmp(&b.penalty)
                .then(a.norm.total_cmp(&b.norm))
                .then(a.index.cmp(&b.index))
        })
        .expect("at least one restart");

    if best.penalty < PENALTY_THRESHOLD {
        let omega = OmegaMatrix {
            entries: best.omega.clone(),
            prob_diag: probs.to_vec(),
        };
        let mut certificate = check_feasibility(g_pi, g_xi, &omega, opts.tol)?;
        certificate.method = CertificateMethod::PenaltySearch;
        if certificate.feasible {
            return Ok(SearchOutcome::Found {
                certificate,
                penalty: best.penalty,
            });
        }
    }
    Ok(SearchOutcome::NotFound {
        best_penalty: best.penalty,
        best_omega: best.omega,
    })
}
