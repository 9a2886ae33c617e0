//! Single-mode Gaussian states in phase space.
//!
//! Quadratures are `Q = (a + a^dag)/sqrt 2`, `P = (a - a^dag)/(i sqrt 2)`, so a
//! coherent state has `d = sqrt 2 (Re alpha, Im alpha)` and the vacuum has
//! covariance `I`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::state::{DensityMatrix, Observable, StateError};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const UNCERTAINTY_TOL: f64 = 1e-9;
pub const BOUNDARY_MASS: f64 = 1e-8;
pub const PHASE_FLOOR: f64 = 1e-12;
/// Slack on `cos(theta) >= rhs` comparisons.
pub const COS_TOL: f64 = 1e-12;
pub const AMPLITUDE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("covariance determinant {0:e} is not positive")]
    SingularCovariance(f64),
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("top Fock levels hold probability {0:e}")]
    TruncationBoundary(f64),
    #[error("state {0} has zero amplitude, phase undefined")]
    UndefinedPhase(usize),
    #[error("gain {0} is below 1")]
    InvalidGain(f64),
    #[error("length mismatch: {0} states, {1} gains")]
    LengthMismatch(usize, usize),
    #[error("target amplitude of state {index} is {found}, expected {expected}")]
    TargetAmplitudeMismatch {
        index: usize,
        expected: f64,
        found: f64,
    },
    #[error("C + V vanishes")]
    DegenerateModel,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    State(#[from] StateError),
}

pub type Result<T> = std::result::Result<T, GaussianError>;

/// First moments `d` and covariance `gamma` of a single-mode state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianState {
    pub d: [f64; 2],
    pub gamma: [[f64; 2]; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl GaussianState {
    pub fn new(d: [f64; 2], gamma: [[f64; 2]; 2]) -> Result<Self> {
        if d.iter()
            .chain(gamma.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(GaussianError::InvalidCovariance("non-finite entry".into()));
        }
        let asym = (gamma[0][1] - gamma[1][0]).abs();
        if asym > SYMMETRY_TOL {
            return Err(GaussianError::InvalidCovariance(format!(
                "asymmetry {asym:e}"
            )));
        }
        let det = gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0];
        if det < 1.0 - UNCERTAINTY_TOL || gamma[0][0] <= 0.0 {
            return Err(GaussianError::InvalidCovariance(format!(
                "determinant {det} violates uncertainty"
            )));
        }
        Ok(Self {
            d,
            gamma,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn vacuum() -> Self {
        Self {
            d: [0.0, 0.0],
            gamma: [[1.0, 0.0], [0.0, 1.0]],
            label: None,
        }
    }

    pub fn coherent(alpha: Complex64) -> Self {
        let s = std::f64::consts::SQRT_2;
        Self {
            d: [s * alpha.re, s * alpha.im],
            ..Self::vacuum()
        }
    }

    pub fn thermal(nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(GaussianError::InvalidParameters(format!(
                "mean photon number {nbar}"
            )));
        }
        let v = 2.0 * nbar + 1.0;
        Ok(Self {
            d: [0.0, 0.0],
            gamma: [[v, 0.0], [0.0, v]],
            label: None,
        })
    }

    /// Noiseless amplification of the first moments, `d -> g d`.
    pub fn amplified(&self, g: f64) -> Self {
        Self {
            d: [g * self.d[0], g * self.d[1]],
            gamma: self.gamma,
            label: self.label.clone(),
        }
    }

    /// Phase-space rotation by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let r = nalgebra::Rotation2::new(angle);
        let d = r * self.mean();
        let g = r.matrix() * self.covariance() * r.matrix().transpose();
        Self {
            d: [d[0], d[1]],
            gamma: [[g[(0, 0)], g[(0, 1)]], [g[(0, 1)], g[(1, 1)]]],
            label: self.label.clone(),
        }
    }

    pub fn mean(&self) -> Vector2<f64> {
        Vector2::new(self.d[0], self.d[1])
    }

    pub fn covariance(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.gamma[0][0],
            self.gamma[0][1],
            self.gamma[1][0],
            self.gamma[1][1],
        )
    }

    pub fn amplitude(&self) -> f64 {
        self.d[0].hypot(self.d[1])
    }
}

/// First and second moments of a truncated Fock-space state.
pub fn moments_from_fock(rho: &DensityMatrix) -> Result<GaussianState> {
    let dim = rho.dim();
    if dim < 3 {
        return Err(GaussianError::TruncationBoundary(1.0));
    }
    let m = rho.matrix();
    let boundary = m[(dim - 1, dim - 1)].re + m[(dim - 2, dim - 2)].re;
    if boundary >= BOUNDARY_MASS {
        return Err(GaussianError::TruncationBoundary(boundary));
    }
    let q = Observable::quadrature_q(dim)?;
    let p = Observable::quadrature_p(dim)?;
    let ex = |op: &linalg::CMatrix| linalg::trace_of_product(op, m).re;
    let (xq, xp) = (q.matrix(), p.matrix());
    let d = [ex(xq), ex(xp)];
    let qq = ex(&(xq * xq));
    let pp = ex(&(xp * xp));
    let qp = ex(&(xq * xp + xp * xq));
    let gamma = [
        [2.0 * qq - 2.0 * d[0] * d[0], qp - 2.0 * d[0] * d[1]],
        [qp - 2.0 * d[0] * d[1], 2.0 * pp - 2.0 * d[1] * d[1]],
    ];
    GaussianState::new(d, gamma)
}

fn inverse_and_det(m: &Matrix2<f64>) -> Result<(Matrix2<f64>, f64)> {
    let det = m.determinant();
    if det <= 0.0 {
        return Err(GaussianError::SingularCovariance(det));
    }
    let inv = Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
    Ok((inv, det))
}

/// `W(q, p) = exp(-(x - d)^T gamma^-1 (x - d)) / (pi sqrt(det gamma))`.
pub fn wigner(g: &GaussianState, q: f64, p: f64) -> Result<f64> {
    let (inv, det) = inverse_and_det(&g.covariance())?;
    let x = Vector2::new(q, p) - g.mean();
    Ok((-(x.dot(&(inv * x)))).exp() / (PI * det.sqrt()))
}

/// `Tr(rho_a rho_b) = 2 pi Int W_a W_b`, in closed form.
pub fn wigner_overlap(a: &GaussianState, b: &GaussianState) -> Result<f64> {
    let (inv, det) = inverse_and_det(&(a.covariance() + b.covariance()))?;
    let dd = a.mean() - b.mean();
    Ok(2.0 * (-(dd.dot(&(inv * dd)))).exp() / det.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub r: f64,
    pub theta: f64,
}

pub fn amplitude_phase(g: &GaussianState) -> Result<PhasePoint> {
    let r = g.amplitude();
    if r <= PHASE_FLOOR {
        return Err(GaussianError::UndefinedPhase(0));
    }
    Ok(PhasePoint {
        r,
        theta: g.d[1].atan2(g.d[0]),
    })
}

/// Squared Euclidean distance between first moments.
pub fn phase_distance(a: &GaussianState, b: &GaussianState) -> f64 {
    let dq = a.d[0] - b.d[0];
    let dp = a.d[1] - b.d[1];
    dq * dq + dp * dp
}

/// Absolute angular difference wrapped into `[0, pi]`.
pub fn relative_phase(a: f64, b: f64) -> f64 {
    let x = (a - b).rem_euclid(2.0 * PI);
    if x > PI {
        2.0 * PI - x
    } else {
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Theorem,
    Corollary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub i: usize,
    pub j: usize,
    pub cos_theta: f64,
    /// Printed bound on `cos theta`; `None` where it is undefined.
    pub rhs: Option<f64>,
    /// `cos theta - rhs`.
    pub margin: Option<f64>,
    /// Amplitude-aware threshold on `cos theta` equivalent to
    /// `D_before >= D_after`; `None` when `g_i g_j = 1`.
    pub exact_rhs: Option<f64>,
    /// `D(rho_i, rho_j) - D(sigma_i, sigma_j)`.
    pub distance_margin: f64,
    pub bound_satisfied: bool,
    pub satisfied: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub kind: CheckKind,
    pub pairs: Vec<PairCheck>,
    pub satisfied: bool,
}

fn phases(states: &[GaussianState], gains: &[f64]) -> Result<Vec<PhasePoint>> {
    if states.len() != gains.len() {
        return Err(GaussianError::LengthMismatch(states.len(), gains.len()));
    }
    if let Some(&g) = gains.iter().find(|&&g| !(g >= 1.0 && g.is_finite())) {
        return Err(GaussianError::InvalidGain(g));
    }
    states
        .iter()
        .enumerate()
        .map(|(i, s)| amplitude_phase(s).map_err(|_| GaussianError::UndefinedPhase(i)))
        .collect()
}

/// Phase-only bound `sqrt((g_i^2 - 1)(g_j^2 - 1)) / (g_i g_j - 1)`, 0 when both gains are 1.
pub fn theorem_bound(gi: f64, gj: f64) -> f64 {
    let den = gi * gj - 1.0;
    if den == 0.0 {
        return 0.0;
    }
    ((gi * gi - 1.0) * (gj * gj - 1.0)).max(0.0).sqrt() / den
}

fn exact_threshold(gi: f64, gj: f64, ri: f64, rj: f64) -> Option<f64> {
    let den = 2.0 * ri * rj * (gi * gj - 1.0);
    (den != 0.0).then(|| ((gi * gi - 1.0) * ri * ri + (gj * gj - 1.0) * rj * rj) / den)
}

/// Pairwise test of whether a deterministic noiseless phase-preserving
/// amplifier with gains `g_i` can exist: it must not increase any pairwise
/// phase-space distance. `satisfied` is that distance condition; `rhs` carries
/// the phase-only bound, which is necessary but not sufficient.
pub fn theorem_check(states: &[GaussianState], gains: &[f64]) -> Result<TheoremReport> {
    let pts = phases(states, gains)?;
    let amplified: Vec<GaussianState> = states
        .iter()
        .zip(gains)
        .map(|(s, &g)| s.amplified(g))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let (gi, gj) = (gains[i], gains[j]);
            let cos_theta = relative_phase(pts[i].theta, pts[j].theta).cos();
            let rhs = theorem_bound(gi, gj);
            let distance_margin = phase_distance(&states[i], &states[j])
                - phase_distance(&amplified[i], &amplified[j]);
            pairs.push(PairCheck {
                i,
                j,
                cos_theta,
                rhs: Some(rhs),
                margin: Some(cos_theta - rhs),
                exact_rhs: exact_threshold(gi, gj, pts[i].r, pts[j].r),
                distance_margin,
                bound_satisfied: cos_theta >= rhs - COS_TOL,
                satisfied: distance_margin >= 0.0,
                degenerate: gi * gj == 1.0,
            });
        }
    }
    let satisfied = pairs.iter().all(|p| p.satisfied);
    Ok(TheoremReport {
        kind: CheckKind::Theorem,
        pairs,
        satisfied,
    })
}

/// The common-target-amplitude specialization, evaluated literally:
/// `cos theta_ij >= sqrt((g_i^2 |d_i|^2 - |d_j|^2) / ((g_i^2 - 1) |d_i|^2 |d_j|^2))`.
pub fn corollary_check(states: &[GaussianState], gains: &[f64]) -> Result<TheoremReport> {
    let pts = phases(states, gains)?;
    if let Some(first) = pts.first() {
        let target = gains[0] * first.r;
        for (i, (p, &g)) in pts.iter().zip(gains).enumerate().skip(1) {
            let found = g * p.r;
            if (found - target).abs() > AMPLITUDE_TOL * target.max(1.0) {
                return Err(GaussianError::TargetAmplitudeMismatch {
                    index: i,
                    expected: target,
                    found,
                });
            }
        }
    }
    let amplified: Vec<GaussianState> = states
        .iter()
        .zip(gains)
        .map(|(s, &g)| s.amplified(g))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let (gi, gj) = (gains[i], gains[j]);
            let (ri, rj) = (pts[i].r, pts[j].r);
            let cos_theta = relative_phase(pts[i].theta, pts[j].theta).cos();
            let degenerate = gi == 1.0;
            let rhs = (!degenerate).then(|| {
                let num = gi * gi * ri * ri - rj * rj;
                (num.max(0.0) / ((gi * gi - 1.0) * ri * ri * rj * rj)).sqrt()
            });
            let satisfied = match rhs {
                Some(r) => cos_theta >= r - COS_TOL,
                None => (ri - rj).abs() <= AMPLITUDE_TOL * ri.max(rj).max(1.0),
            };
            let distance_margin = phase_distance(&states[i], &states[j])
                - phase_distance(&amplified[i], &amplified[j]);
            pairs.push(PairCheck {
                i,
                j,
                cos_theta,
                rhs,
                margin: rhs.map(|r| cos_theta - r),
                exact_rhs: exact_threshold(gi, gj, ri, rj),
                distance_margin,
                bound_satisfied: cos_theta >= theorem_bound(gi, gj) - COS_TOL,
                satisfied,
                degenerate,
            });
        }
    }
    let satisfied = pairs.iter().all(|p| p.satisfied);
    Ok(TheoremReport {
        kind: CheckKind::Corollary,
        pairs,
        satisfied,
    })
}

/// `exp((g^2 - 1) D / 2)`, the ratio of input to output overlap for a
/// coherent pair at phase-space distance `D` under gain `g`.
pub fn gain_probability_f(g: f64, pair_distance: f64) -> Result<f64> {
    if !(g >= 1.0 && g.is_finite()) {
        return Err(GaussianError::InvalidGain(g));
    }
    if !(pair_distance >= 0.0 && pair_distance.is_finite()) {
        return Err(GaussianError::InvalidParameters(format!(
            "pair distance {pair_distance}"
        )));
    }
    Ok(((g * g - 1.0) * pair_distance / 2.0).exp())
}

/// `f(g) = C p^2 + V (1 - p)^2` with `D` the input pair distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainProbabilityModel {
    pub c: f64,
    pub v: f64,
    pub d: f64,
}

impl GainProbabilityModel {
    pub fn new(c: f64, v: f64, d: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) || !(v >= 0.0 && v.is_finite()) || !(d >= 0.0 && d.is_finite())
        {
            return Err(GaussianError::InvalidParameters(format!(
                "C = {c}, V = {v}, D = {d}"
            )));
        }
        Ok(Self { c, v, d })
    }

    pub fn f(&self, p: f64) -> f64 {
        self.c * p * p + self.v * (1.0 - p) * (1.0 - p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinGain {
    pub g_min: f64,
    pub p0: f64,
    /// `f` at its minimum over `p`.
    pub rhs: f64,
    /// False when `rhs < 1`, where every `g >= 1` already satisfies the bound.
    pub constraint_active: bool,
}

/// Smallest `g` with `exp((g^2 - 1) D / 2) = min_p f(p)`.
pub fn min_gain(model: &GainProbabilityModel) -> Result<MinGain> {
    let GainProbabilityModel { c, v, d } = *model;
    if c + v == 0.0 {
        return Err(GaussianError::DegenerateModel);
    }
    if d <= 0.0 {
        return Err(GaussianError::InvalidParameters(
            "pair distance must be positive".into(),
        ));
    }
    let p0 = v / (v + c);
    let rhs = model.f(p0);
    if rhs < 1.0 {
        return Ok(MinGain {
            g_min: 1.0,
            p0,
            rhs,
            constraint_active: false,
        });
    }
    let g_min = (1.0 + 2.0 * rhs.ln() / d).sqrt();
    Ok(MinGain {
        g_min,
        p0,
        rhs,
        constraint_active: true,
    })
}

/// `1 + sqrt(epsilon / (kappa d_min^2))`.
pub fn min_gain_threshold(epsilon: f64, kappa: f64, d_min: f64) -> Result<f64> {
    if !(epsilon >= 0.0 && epsilon.is_finite())
        || !(kappa > 0.0 && kappa.is_finite())
        || !(d_min > 0.0 && d_min.is_finite())
    {
        return Err(GaussianError::InvalidParameters(format!(
            "epsilon = {epsilon}, kappa = {kappa}, d_min = {d_min}"
        )));
    }
    Ok(1.0 + (epsilon / (kappa * d_min * d_min)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{make_coherent_state, make_thermal_state, overlap};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn grid_overlap(a: &GaussianState, b: &GaussianState, half: f64, step: f64) -> f64 {
        let n = (2.0 * half / step).round() as i64;
        let mut acc = 0.0;
        for i in 0..=n {
            let q = -half + i as f64 * step;
            for j in 0..=n {
                let p = -half + j as f64 * step;
                acc += wigner(a, q, p).unwrap() * wigner(b, q, p).unwrap();
            }
        }
        2.0 * PI * acc * step * step
    }

    #[test]
    fn fock_moments() {
        let vac =
            moments_from_fock(&make_coherent_state(c(0.0, 0.0), 30).unwrap().to_density()).unwrap();
        assert!(vac.d.iter().all(|x| x.abs() < 1e-8));
        assert!(
            close(vac.gamma[0][0], 1.0, 1e-8)
                && close(vac.gamma[1][1], 1.0, 1e-8)
                && vac.gamma[0][1].abs() < 1e-8
        );

        let coh =
            moments_from_fock(&make_coherent_state(c(1.0, 0.0), 40).unwrap().to_density()).unwrap();
        assert!(close(coh.d[0], SQRT_2, 1e-6) && coh.d[1].abs() < 1e-6);
        assert!(close(coh.gamma[0][0], 1.0, 1e-6) && close(coh.gamma[1][1], 1.0, 1e-6));

        let th = moments_from_fock(&make_thermal_state(1.0, 40).unwrap()).unwrap();
        assert!(th.d.iter().all(|x| x.abs() < 1e-6));
        assert!(close(th.gamma[0][0], 3.0, 1e-6) && close(th.gamma[1][1], 3.0, 1e-6));
    }

    #[test]
    fn fock_boundary_is_rejected() {
        let mut m = linalg::CMatrix::zeros(6, 6);
        m[(0, 0)] = Complex64::new(0.9, 0.0);
        m[(5, 5)] = Complex64::new(0.1, 0.0);
        let rho = DensityMatrix::new(m).unwrap();
        assert!(matches!(
            moments_from_fock(&rho),
            Err(GaussianError::TruncationBoundary(_))
        ));
    }

    #[test]
    fn covariance_validation() {
        assert!(GaussianState::new([0.0, 0.0], [[0.5, 0.0], [0.0, 0.5]]).is_err());
        assert!(GaussianState::new([0.0, 0.0], [[1.0, 0.1], [0.2, 1.0]]).is_err());
        assert!(GaussianState::new([0.0, 0.0], [[2.0, 0.0], [0.0, 0.5]]).is_ok());
    }

    #[test]
    fn wigner_examples() {
        let vac = GaussianState::vacuum();
        assert!(close(wigner(&vac, 0.0, 0.0).unwrap(), 1.0 / PI, 1e-15));
        let step = 0.05;
        let mut mass = 0.0;
        for i in 0..=320 {
            for j in 0..=320 {
                mass += wigner(&vac, -8.0 + i as f64 * step, -8.0 + j as f64 * step).unwrap();
            }
        }
        assert!(close(mass * step * step, 1.0, 1e-6));
        let coh = GaussianState::coherent(c(1.0, 0.0));
        let peak = wigner(&coh, SQRT_2, 0.0).unwrap();
        for (dq, dp) in [(0.01, 0.0), (-0.01, 0.0), (0.0, 0.01), (0.0, -0.01)] {
            assert!(wigner(&coh, SQRT_2 + dq, dp).unwrap() < peak);
        }
        let broken = GaussianState {
            d: [0.0, 0.0],
            gamma: [[0.0, 0.0], [0.0, 0.0]],
            label: None,
        };
        assert!(matches!(
            wigner(&broken, 0.0, 0.0),
            Err(GaussianError::SingularCovariance(_))
        ));
    }

    #[test]
    fn overlap_examples() {
        let vac = GaussianState::vacuum();
        assert!(close(wigner_overlap(&vac, &vac).unwrap(), 1.0, 1e-15));
        let one = GaussianState::coherent(c(1.0, 0.0));
        assert!(close(
            wigner_overlap(&vac, &one).unwrap(),
            (-1.0f64).exp(),
            1e-10
        ));
        let th = GaussianState::thermal(1.0).unwrap();
        assert!(close(wigner_overlap(&vac, &th).unwrap(), 0.5, 1e-12));
    }

    #[test]
    fn overlap_matches_fock_and_grid() {
        let cases = [
            (
                GaussianState::coherent(c(0.3, -0.4)),
                GaussianState::coherent(c(-1.2, 0.7)),
            ),
            (
                GaussianState::coherent(c(1.5, 1.0)),
                GaussianState::thermal(2.0).unwrap(),
            ),
            (
                GaussianState::thermal(0.5).unwrap(),
                GaussianState::thermal(1.5).unwrap(),
            ),
        ];
        let fock = |g: &GaussianState| -> DensityMatrix {
            if g.gamma[0][0] == 1.0 {
                make_coherent_state(c(g.d[0] / SQRT_2, g.d[1] / SQRT_2), 60)
                    .unwrap()
                    .to_density()
            } else {
                make_thermal_state((g.gamma[0][0] - 1.0) / 2.0, 120).unwrap()
            }
        };
        for (a, b) in &cases {
            let closed = wigner_overlap(a, b).unwrap();
            let (fa, fb) = (fock(a), fock(b));
            let dim = fa.dim().max(fb.dim());
            let pad = |r: &DensityMatrix| {
                let mut m = linalg::CMatrix::zeros(dim, dim);
                m.view_mut((0, 0), (r.dim(), r.dim())).copy_from(r.matrix());
                DensityMatrix::new(m).unwrap()
            };
            let fo = overlap(&pad(&fa), &pad(&fb)).unwrap();
            assert!(close(closed, fo, 1e-6), "{closed} vs {fo}");
            assert!(close(closed, grid_overlap(a, b, 10.0, 0.05), 1e-4));
        }
    }

    #[test]
    fn phase_examples() {
        let p = amplitude_phase(&GaussianState::coherent(c(1.0, 1.0))).unwrap();
        assert!(close(p.r, 2.0, 1e-12) && close(p.theta, FRAC_PI_4, 1e-12));
        let up = GaussianState {
            d: [0.0, 1.0],
            ..GaussianState::vacuum()
        };
        assert!(close(amplitude_phase(&up).unwrap().theta, FRAC_PI_2, 1e-15));
        assert!(matches!(
            amplitude_phase(&GaussianState::vacuum()),
            Err(GaussianError::UndefinedPhase(_))
        ));
        assert!(close(relative_phase(3.0, -3.0), 2.0 * PI - 6.0, 1e-12));
    }

    #[test]
    fn distance_examples() {
        let a = GaussianState::coherent(c(0.4, 0.2));
        assert_eq!(phase_distance(&a, &a), 0.0);
        let vac = GaussianState::vacuum();
        let one = GaussianState::coherent(c(1.0, 0.0));
        assert!(close(phase_distance(&vac, &one), 2.0, 1e-15));
        let d = phase_distance(&a, &one);
        assert!(close(
            phase_distance(&a.amplified(2.0), &one.amplified(2.0)),
            4.0 * d,
            1e-12
        ));
    }

    fn polar(r: f64, theta: f64) -> GaussianState {
        GaussianState {
            d: [r * theta.cos(), r * theta.sin()],
            ..GaussianState::vacuum()
        }
    }

    #[test]
    fn theorem_examples() {
        // same phase: the printed bound never exceeds 1
        for (gi, gj) in [(1.0, 3.0), (2.0, 2.0), (1.5, 2.5)] {
            let r = theorem_check(&[polar(1.0, 0.4), polar(2.0, 0.4)], &[gi, gj]).unwrap();
            assert!(r.pairs[0].bound_satisfied);
            let lhs = (gi * gj - 1.0) * (gi * gj - 1.0) - (gi * gi - 1.0) * (gj * gj - 1.0);
            assert!(close(lhs, (gi - gj) * (gi - gj), 1e-12));
        }
        // same phase, distance preserved
        let r = theorem_check(&[polar(1.0, 0.4), polar(2.0, 0.4)], &[2.0, 1.0]).unwrap();
        assert!(r.satisfied);

        let r = theorem_check(&[polar(1.0, 0.0), polar(1.0, 0.3)], &[2.0, 2.0]).unwrap();
        assert!(!r.satisfied && !r.pairs[0].bound_satisfied);
        assert!(close(r.pairs[0].rhs.unwrap(), 1.0, 1e-15));

        let r = theorem_check(
            &[polar(1.0, 0.0), polar(0.5, 2.0), polar(2.0, -1.0)],
            &[1.0; 3],
        )
        .unwrap();
        assert!(r.satisfied && r.pairs.iter().all(|p| p.degenerate && p.rhs == Some(0.0)));

        assert!(matches!(
            theorem_check(&[polar(1.0, 0.0), GaussianState::vacuum()], &[1.0, 1.0]),
            Err(GaussianError::UndefinedPhase(1))
        ));
        assert!(matches!(
            theorem_check(&[polar(1.0, 0.0)], &[0.5]),
            Err(GaussianError::InvalidGain(_))
        ));
    }

    #[test]
    fn corollary_examples() {
        // zero bound: any relative phase up to pi/2 passes
        for theta in [0.0, 0.7, 1.5] {
            let r = corollary_check(&[polar(1.0, 0.0), polar(2.0, theta)], &[2.0, 1.0]).unwrap();
            assert!(r.satisfied);
            assert!(r.pairs[0].rhs.unwrap().abs() < 1e-15);
        }
        let r = corollary_check(&[polar(1.0, 0.0), polar(2.0, 2.5)], &[2.0, 1.0]).unwrap();
        assert!(!r.satisfied);

        let r = corollary_check(&[polar(1.0, 0.2), polar(1.0, 0.2)], &[3.0, 3.0]).unwrap();
        assert!(close(r.pairs[0].rhs.unwrap(), 1.0, 1e-12) && r.satisfied);
        let r = corollary_check(&[polar(1.0, 0.2), polar(1.0, 0.25)], &[3.0, 3.0]).unwrap();
        assert!(!r.satisfied);

        assert!(
            corollary_check(&[polar(1.0, 0.2)], &[2.0])
                .unwrap()
                .satisfied
        );
        assert!(matches!(
            corollary_check(&[polar(1.0, 0.0), polar(1.5, 0.0)], &[2.0, 1.0]),
            Err(GaussianError::TargetAmplitudeMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn gain_probability_examples() {
        assert_eq!(gain_probability_f(1.0, 0.7).unwrap(), 1.0);
        let f = gain_probability_f(2.0, 0.5).unwrap();
        assert!(close(f, 0.75f64.exp(), 1e-12));
        assert!(close(f, (-0.25f64).exp() / (-1.0f64).exp(), 1e-12));
        assert!(gain_probability_f(2.1, 0.5).unwrap() > f);
        assert!(matches!(
            gain_probability_f(0.9, 0.5),
            Err(GaussianError::InvalidGain(_))
        ));
    }

    #[test]
    fn gain_probability_matches_coherent_overlaps() {
        let (a, b) = (c(0.3, 0.1), c(-0.2, 0.5));
        let g = 1.7;
        let d = phase_distance(&GaussianState::coherent(a), &GaussianState::coherent(b));
        let before = (-(a - b).norm_sqr()).exp();
        let after = (-(a * g - b * g).norm_sqr()).exp();
        assert!(close(
            gain_probability_f(g, d).unwrap(),
            before / after,
            1e-8
        ));
    }

    #[test]
    fn min_gain_examples() {
        let m = min_gain(&GainProbabilityModel::new(0.5, 0.5, 1.0).unwrap()).unwrap();
        assert_eq!(m.p0, 0.5);
        let m = min_gain(&GainProbabilityModel::new(1.0, 3.0, 2.0).unwrap()).unwrap();
        assert!(close(m.p0, 0.75, 1e-15) && close(m.rhs, 0.75, 1e-15));
        assert!(!m.constraint_active && m.g_min == 1.0);
        // C outside [0, 1] is only rejected by the validated constructor
        let m = min_gain(&GainProbabilityModel {
            c: 2.0,
            v: 6.0,
            d: 2.0,
        })
        .unwrap();
        assert!(close(m.rhs, 1.5, 1e-12) && m.constraint_active);
        assert!(close(m.g_min, (1.0 + 1.5f64.ln()).sqrt(), 1e-12));
        assert!(close(gain_probability_f(m.g_min, 2.0).unwrap(), 1.5, 1e-12));
        assert!(matches!(
            min_gain(&GainProbabilityModel::new(0.0, 0.0, 1.0).unwrap()),
            Err(GaussianError::DegenerateModel)
        ));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(min_gain_threshold(0.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(close(
            min_gain_threshold(0.04, 1.0, 1.0).unwrap(),
            1.2,
            1e-15
        ));
        let a = min_gain_threshold(0.3, 2.0, 0.7).unwrap() - 1.0;
        let b = min_gain_threshold(0.3, 2.0, 1.4).unwrap() - 1.0;
        assert!(close(b, a / 2.0, 1e-15));
        // inverting the displacement distance at the threshold
        let (eps, kappa, dmin) = (0.3, 2.0, 0.7);
        let g = min_gain_threshold(eps, kappa, dmin).unwrap();
        assert!(close(((g - 1.0) * dmin).powi(2), eps / kappa, 1e-12));
        assert!(min_gain_threshold(0.1, 0.0, 1.0).is_err());
    }

    fn arb_states(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.1f64..3.0, -PI..PI), n)
    }

    proptest! {
        #[test]
        fn scaling_is_quadratic(a in arb_states(2), g in 0.01f64..5.0) {
            let s: Vec<_> = a.iter().map(|&(r, t)| polar(r, t)).collect();
            let before = phase_distance(&s[0], &s[1]);
            let after = phase_distance(&s[0].amplified(g), &s[1].amplified(g));
            prop_assert!((after - g * g * before).abs() <= 1e-12 * after.max(1.0));
        }

        #[test]
        fn theorem_matches_distances(a in arb_states(3), gains in prop::collection::vec(1.0f64..3.0, 3)) {
            let s: Vec<_> = a.iter().map(|&(r, t)| polar(r, t)).collect();
            let report = theorem_check(&s, &gains).unwrap();
            let mut direct = true;
            for i in 0..3 {
                for j in i + 1..3 {
                    direct &= phase_distance(&s[i], &s[j]) >= phase_distance(&s[i].amplified(gains[i]), &s[j].amplified(gains[j]));
                }
            }
            prop_assert_eq!(report.satisfied, direct);
            // the printed bound is necessary
            if report.satisfied {
                prop_assert!(report.pairs.iter().all(|p| p.bound_satisfied));
            }
        }

        #[test]
        fn theorem_rotation_invariant(a in arb_states(3), gains in prop::collection::vec(1.0f64..3.0, 3), phi in -PI..PI) {
            let s: Vec<_> = a.iter().map(|&(r, t)| polar(r, t)).collect();
            let rot: Vec<_> = s.iter().map(|x| x.rotated(phi)).collect();
            let x = theorem_check(&s, &gains).unwrap();
            let y = theorem_check(&rot, &gains).unwrap();
            for (p, q) in x.pairs.iter().zip(&y.pairs) {
                // verdicts agree unless the margin is at round-off level
                if p.distance_margin.abs() > 1e-9 {
                    prop_assert_eq!(p.satisfied, q.satisfied);
                }
            }
        }

        #[test]
        fn exact_threshold_matches_distance(a in arb_states(2), gains in prop::collection::vec(1.01f64..3.0, 2)) {
            let s: Vec<_> = a.iter().map(|&(r, t)| polar(r, t)).collect();
            let report = theorem_check(&s, &gains).unwrap();
            let p = &report.pairs[0];
            if p.distance_margin.abs() > 1e-9 {
                prop_assert_eq!(p.satisfied, p.cos_theta >= p.exact_rhs.unwrap());
            }
        }
    }
}
