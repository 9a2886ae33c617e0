//! Finite-dimensional states and observables.
//!
//! Pure states are normalized complex vectors, mixed states are Hermitian
//! trace-one PSD matrices, and observables are Hermitian matrices. Bosonic
//! modes live in a truncated Fock basis `|0>, ..., |dim-1>` with the
//! quadrature convention `Q = (a + a^dag)/sqrt(2)`, `P = (a - a^dag)/(i sqrt(2))`,
//! so the vacuum has `<Q^2> = 1/2` and unit covariance.
//!
//! Every other module checks its results against the arithmetic here.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{self, CMatrix, CVector, ONE, ZERO};

/// Absolute tolerance for norm, trace and Hermiticity checks on unit-scale objects.
pub const STATE_TOL: f64 = 1e-10;
/// Most negative eigenvalue accepted for a density matrix.
pub const PSD_TOL: f64 = 1e-9;
/// Largest Fock-tail probability discarded by truncation.
pub const TRUNCATION_TAIL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("dimension must be at least 1, got {0}")]
    InvalidDim(usize),
    #[error("truncation at dim {dim} discards probability {tail:e} (limit {limit:e})")]
    TruncationTooSmall { dim: usize, tail: f64, limit: f64 },
    #[error("state norm is {0}, expected 1")]
    NotNormalized(f64),
    #[error("matrix is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("trace is {0}, expected 1")]
    InvalidTrace(f64),
    #[error("matrix has negative eigenvalue {0:e}")]
    NotPsd(f64),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("state set is empty")]
    EmptySet,
    #[error("variance is negative ({0:e})")]
    NegativeVariance(f64),
    #[error("expectation has imaginary part {0:e}")]
    ComplexExpectation(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, StateError>;

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(StateError::DimensionMismatch { left, right });
    }
    Ok(())
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    label: Option<String>,
}

impl PureState {
    /// Wraps `amplitudes`, which must already have unit norm.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(StateError::InvalidDim(0));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(Self {
            amplitudes,
            label: None,
        })
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(StateError::InvalidDim(0));
        }
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(Self {
            amplitudes: amplitudes.unscale(norm),
            label: None,
        })
    }

    pub fn from_slice(amplitudes: &[Complex64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    /// Computational basis vector `|index>`.
    pub fn basis(index: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(StateError::InvalidDim(dim));
        }
        if index >= dim {
            return Err(StateError::InvalidParameter(format!(
                "basis index {index} outside dim {dim}"
            )));
        }
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Ok(Self {
            amplitudes: v,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            matrix: linalg::outer(&self.amplitudes, &self.amplitudes),
        }
    }
}

/// Hermitian, trace-one, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(StateError::InvalidDim(0));
        }
        if !matrix.is_square() {
            return Err(StateError::DimensionMismatch {
                left: matrix.nrows(),
                right: matrix.ncols(),
            });
        }
        let defect = linalg::hermitian_defect(&matrix);
        if defect > STATE_TOL {
            return Err(StateError::NotHermitian(defect));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(StateError::InvalidTrace(tr.re));
        }
        let min = linalg::min_eigenvalue(&matrix);
        if min < -PSD_TOL {
            return Err(StateError::NotPsd(min));
        }
        Ok(Self { matrix })
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(StateError::InvalidDim(dim));
        }
        Ok(Self {
            matrix: CMatrix::identity(dim, dim).unscale(dim as f64),
        })
    }

    /// Convex mixture `sum_k w_k rho_k`; weights must be nonnegative and sum to 1.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts.first().ok_or(StateError::EmptySet)?;
        let dim = first.1.dim();
        let mut m = CMatrix::zeros(dim, dim);
        for (w, rho) in parts {
            check_dims(dim, rho.dim())?;
            if *w < 0.0 {
                return Err(StateError::InvalidParameter(format!(
                    "negative mixture weight {w}"
                )));
            }
            m += rho.matrix.scale(*w);
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_of_product(&self.matrix, &self.matrix).re
    }
}

impl From<&PureState> for DensityMatrix {
    fn from(psi: &PureState) -> Self {
        psi.to_density()
    }
}

/// Hermitian operator with expectation/fluctuation semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
}

impl Observable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(StateError::DimensionMismatch {
                left: matrix.nrows(),
                right: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(StateError::InvalidDim(0));
        }
        let defect = linalg::hermitian_defect(&matrix);
        if defect > STATE_TOL {
            return Err(StateError::NotHermitian(defect));
        }
        Ok(Self { matrix })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(StateError::InvalidDim(0));
        }
        let d =
            CVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0)));
        Ok(Self {
            matrix: CMatrix::from_diagonal(&d),
        })
    }

    /// Photon number `a^dag a`.
    pub fn number(dim: usize) -> Result<Self> {
        let values: Vec<f64> = (0..dim).map(|n| n as f64).collect();
        Self::diagonal(&values)
    }

    /// `Q = (a + a^dag)/sqrt(2)`.
    pub fn quadrature_q(dim: usize) -> Result<Self> {
        let a = annihilation(dim)?;
        Ok(Self {
            matrix: (&a + a.adjoint()).unscale(std::f64::consts::SQRT_2),
        })
    }

    /// `P = (a - a^dag)/(i sqrt(2))`.
    pub fn quadrature_p(dim: usize) -> Result<Self> {
        let a = annihilation(dim)?;
        let denom = Complex64::new(0.0, std::f64::consts::SQRT_2);
        Ok(Self {
            matrix: (&a - a.adjoint()).map(|z| z / denom),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn squared(&self) -> Observable {
        Observable {
            matrix: &self.matrix * &self.matrix,
        }
    }

    /// Eigenvalues `a_f` (ascending) and eigenvectors `|a_f>` as columns.
    pub fn spectrum(&self) -> (Vec<f64>, CMatrix) {
        linalg::hermitian_eigen(&self.matrix)
    }

    /// Largest eigenvalue `a_max`.
    pub fn max_eigenvalue(&self) -> f64 {
        linalg::max_eigenvalue(&self.matrix)
    }
}

/// Bosonic annihilation operator truncated to `dim` levels.
pub fn annihilation(dim: usize) -> Result<CMatrix> {
    if dim == 0 {
        return Err(StateError::InvalidDim(dim));
    }
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    Ok(a)
}

/// Common interface for pure and mixed states.
pub trait QuantumState {
    fn dim(&self) -> usize;
    /// `Tr(op rho)`, or `<psi|op|psi>` for pure states.
    fn expect_matrix(&self, op: &CMatrix) -> Complex64;
    fn density(&self) -> DensityMatrix;
    fn as_pure(&self) -> Option<&PureState> {
        None
    }
}

impl QuantumState for PureState {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn expect_matrix(&self, op: &CMatrix) -> Complex64 {
        self.amplitudes.dotc(&(op * &self.amplitudes))
    }

    fn density(&self) -> DensityMatrix {
        self.to_density()
    }

    fn as_pure(&self) -> Option<&PureState> {
        Some(self)
    }
}

impl QuantumState for DensityMatrix {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn expect_matrix(&self, op: &CMatrix) -> Complex64 {
        linalg::trace_of_product(op, &self.matrix)
    }

    fn density(&self) -> DensityMatrix {
        self.clone()
    }
}

/// Probability mass a coherent state of amplitude `alpha` places on `n >= dim`.
pub fn coherent_tail_mass(alpha: Complex64, dim: usize) -> f64 {
    let mean = alpha.norm_sqr();
    let mut term = (-mean).exp();
    let mut kept = 0.0;
    for n in 0..dim {
        if n > 0 {
            term *= mean / n as f64;
        }
        kept += term;
    }
    (1.0 - kept).max(0.0)
}

/// Default truncation `max(20, ceil(|alpha|^2 + 6|alpha| + 10))`.
pub fn default_dim(alpha: Complex64) -> usize {
    let r = alpha.norm();
    let d = (r * r + 6.0 * r + 10.0).ceil() as usize;
    d.max(20)
}

/// Coherent state `|alpha>` truncated to `dim` Fock levels and renormalized.
pub fn make_coherent_state(alpha: Complex64, dim: usize) -> Result<PureState> {
    if dim == 0 {
        return Err(StateError::InvalidDim(dim));
    }
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(StateError::InvalidParameter(format!(
            "non-finite amplitude {alpha}"
        )));
    }
    let tail = coherent_tail_mass(alpha, dim);
    if tail > TRUNCATION_TAIL {
        return Err(StateError::TruncationTooSmall {
            dim,
            tail,
            limit: TRUNCATION_TAIL,
        });
    }
    let mut v = CVector::zeros(dim);
    let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    v[0] = c;
    for n in 1..dim {
        c = c * alpha / (n as f64).sqrt();
        v[n] = c;
    }
    PureState::normalized(v)
}

/// Thermal state with mean photon number `nbar`, truncated to `dim` levels.
pub fn make_thermal_state(nbar: f64, dim: usize) -> Result<DensityMatrix> {
    if dim == 0 {
        return Err(StateError::InvalidDim(dim));
    }
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(StateError::InvalidParameter(format!(
            "mean photon number {nbar}"
        )));
    }
    let ratio = nbar / (nbar + 1.0);
    let tail = ratio.powi(dim as i32);
    if tail > TRUNCATION_TAIL {
        return Err(StateError::TruncationTooSmall {
            dim,
            tail,
            limit: TRUNCATION_TAIL,
        });
    }
    let mut probs: Vec<f64> = (0..dim)
        .map(|n| ratio.powi(n as i32) / (nbar + 1.0))
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let d = CVector::from_iterator(dim, probs.iter().map(|&p| Complex64::new(p, 0.0)));
    DensityMatrix::new(CMatrix::from_diagonal(&d))
}

/// `Tr(A rho)`; the imaginary part must vanish.
pub fn expectation<S: QuantumState + ?Sized>(obs: &Observable, state: &S) -> Result<f64> {
    check_dims(obs.dim(), state.dim())?;
    let z = state.expect_matrix(obs.matrix());
    if z.im.abs() > STATE_TOL * (1.0 + z.re.abs()) {
        return Err(StateError::ComplexExpectation(z.im));
    }
    Ok(z.re)
}

/// Standard deviation `sqrt(Tr(A^2 rho) - Tr(A rho)^2)`.
pub fn fluctuation<S: QuantumState + ?Sized>(obs: &Observable, state: &S) -> Result<f64> {
    let mean = expectation(obs, state)?;
    let second = expectation(&obs.squared(), state)?;
    let var = second - mean * mean;
    if var < -1e-12 * (1.0 + second.abs()) {
        return Err(StateError::NegativeVariance(var));
    }
    Ok(var.max(0.0).sqrt())
}

/// `Tr(rho_a rho_b)`; `|<a|b>|^2` for two pure states.
pub fn overlap<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: QuantumState + ?Sized,
    B: QuantumState + ?Sized,
{
    check_dims(a.dim(), b.dim())?;
    if let (Some(pa), Some(pb)) = (a.as_pure(), b.as_pure()) {
        return Ok(pa.amplitudes.dotc(&pb.amplitudes).norm_sqr());
    }
    let rho_a = a.density();
    let rho_b = b.density();
    Ok(linalg::trace_of_product(rho_a.matrix(), rho_b.matrix()).re)
}

/// `(1/2) ||rho_a - rho_b||_1`.
pub fn trace_distance<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: QuantumState + ?Sized,
    B: QuantumState + ?Sized,
{
    check_dims(a.dim(), b.dim())?;
    let diff = a.density().matrix() - b.density().matrix();
    let sum: f64 = linalg::hermitian_eigenvalues(&diff)
        .iter()
        .map(|x| x.abs())
        .sum();
    Ok(0.5 * sum)
}

/// Matrix of pairwise overlaps with `entries[(i, j)] = <psi_j|psi_i>`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: CMatrix,
    pub labels: Vec<String>,
}

impl GramMatrix {
    /// Wraps an explicit Hermitian matrix (e.g. a Gram matrix known in closed form).
    pub fn from_entries(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(StateError::DimensionMismatch {
                left: entries.nrows(),
                right: entries.ncols(),
            });
        }
        if entries.nrows() == 0 {
            return Err(StateError::EmptySet);
        }
        let defect = linalg::hermitian_defect(&entries);
        if defect > STATE_TOL {
            return Err(StateError::NotHermitian(defect));
        }
        let labels = (0..entries.nrows()).map(|i| format!("s{i}")).collect();
        Ok(Self { entries, labels })
    }

    /// Two-state Gram matrix with off-diagonal `<psi_2|psi_1> = s`.
    pub fn two_state(s: Complex64) -> Self {
        let entries = CMatrix::from_row_slice(2, 2, &[ONE, s, s.conj(), ONE]);
        Self {
            entries,
            labels: vec!["s0".into(), "s1".into()],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.entries)
    }
}

pub fn gram_matrix(states: &[PureState]) -> Result<GramMatrix> {
    let first = states.first().ok_or(StateError::EmptySet)?;
    let n = states.len();
    for s in states {
        check_dims(first.dim(), s.dim())?;
    }
    let mut entries = DMatrix::from_element(n, n, ZERO);
    for i in 0..n {
        for j in 0..n {
            entries[(i, j)] = states[j].amplitudes.dotc(&states[i].amplitudes);
        }
    }
    let labels = states
        .iter()
        .enumerate()
        .map(|(i, s)| s.label.clone().unwrap_or_else(|| format!("s{i}")))
        .collect();
    Ok(GramMatrix { entries, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_is_first_basis_vector() {
        let v = make_coherent_state(c(0.0, 0.0), 5).unwrap();
        assert_eq!(v.amplitudes()[0], ONE);
        assert!(v.amplitudes().iter().skip(1).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn coherent_number_expectation() {
        let psi = make_coherent_state(c(1.0, 0.0), 20).unwrap();
        let n = expectation(&Observable::number(20).unwrap(), &psi).unwrap();
        assert!((n - 1.0).abs() < 1e-6);

        let psi = make_coherent_state(c(1.5, 0.0), 30).unwrap();
        let n = expectation(&Observable::number(30).unwrap(), &psi).unwrap();
        assert!((n - 2.25).abs() < 1e-6);
    }

    #[test]
    fn truncation_too_small_is_rejected() {
        match make_coherent_state(c(3.0, 0.0), 5) {
            Err(StateError::TruncationTooSmall { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            make_coherent_state(c(1.0, 0.0), 0),
            Err(StateError::InvalidDim(0))
        );
    }

    #[test]
    fn default_dim_keeps_tail_small() {
        for r in [0.0, 0.5, 1.0, 2.0, 3.0, 4.0] {
            let alpha = c(r, 0.0);
            assert!(coherent_tail_mass(alpha, default_dim(alpha)) <= TRUNCATION_TAIL);
        }
    }

    #[test]
    fn mixed_expectation_is_zero_by_symmetry() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let z = Observable::diagonal(&[1.0, -1.0]).unwrap();
        assert!(expectation(&z, &rho).unwrap().abs() < 1e-15);
    }

    #[test]
    fn fluctuation_examples() {
        let z = Observable::diagonal(&[1.0, -1.0]).unwrap();
        let up = PureState::basis(0, 2).unwrap();
        assert!(fluctuation(&z, &up).unwrap() < 1e-10);

        let psi = make_coherent_state(c(2.0, 0.0), 40).unwrap();
        let dn = fluctuation(&Observable::number(40).unwrap(), &psi).unwrap();
        assert!((dn - 2.0).abs() < 1e-6);

        let vac = PureState::basis(0, 20).unwrap();
        let dq = fluctuation(&Observable::quadrature_q(20).unwrap(), &vac).unwrap();
        assert!((dq - FRAC_1_SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn dimension_mismatch() {
        let psi = PureState::basis(0, 3).unwrap();
        let n = Observable::number(4).unwrap();
        assert_eq!(
            expectation(&n, &psi),
            Err(StateError::DimensionMismatch { left: 4, right: 3 })
        );
    }

    #[test]
    fn overlap_examples() {
        let a = make_coherent_state(c(0.0, 0.0), 30).unwrap();
        let b = make_coherent_state(c(1.0, 0.0), 30).unwrap();
        assert!((overlap(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((overlap(&a, &b).unwrap() - (-1.0f64).exp()).abs() < 1e-6);
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        assert!((overlap(&mixed, &mixed).unwrap() - 0.5).abs() < 1e-15);
        // pure/mixed path agrees with pure/pure path
        assert!((overlap(&a.to_density(), &b).unwrap() - overlap(&a, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_examples() {
        let zero = PureState::basis(0, 2).unwrap();
        let one = PureState::basis(1, 2).unwrap();
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(trace_distance(&zero, &zero).unwrap().abs() < 1e-15);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        assert!((trace_distance(&zero, &mixed).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gram_examples() {
        let basis: Vec<_> = (0..3).map(|k| PureState::basis(k, 3).unwrap()).collect();
        let g = gram_matrix(&basis).unwrap();
        assert!(linalg::max_abs_diff(&g.entries, &CMatrix::identity(3, 3)) < 1e-15);

        let plus = PureState::from_slice(&[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]).unwrap();
        let g = gram_matrix(&[PureState::basis(0, 2).unwrap(), plus]).unwrap();
        let expected = CMatrix::from_row_slice(
            2,
            2,
            &[ONE, c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0), ONE],
        );
        assert!(linalg::max_abs_diff(&g.entries, &expected) < 1e-10);
        assert!(g.min_eigenvalue() >= -1e-10);

        assert_eq!(gram_matrix(&[]), Err(StateError::EmptySet));
    }

    #[test]
    fn gram_index_convention() {
        // entries[(i, j)] = <psi_j|psi_i>
        let a = PureState::basis(0, 2).unwrap();
        let b = PureState::from_slice(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let i_phase = PureState::from_slice(&[c(0.0, 0.6), c(0.8, 0.0)]).unwrap();
        let g = gram_matrix(&[a.clone(), i_phase.clone()]).unwrap();
        assert_eq!(g.entries[(0, 1)], i_phase.inner(&a).unwrap());
        assert_eq!(g.entries[(1, 0)], a.inner(&i_phase).unwrap());
        assert!(gram_matrix(&[a, b]).unwrap().entries[(0, 1)].im.abs() < 1e-15);
    }

    #[test]
    fn coherent_moments_of_quadratures() {
        let alpha = c(0.7, -0.4);
        let psi = make_coherent_state(alpha, 30).unwrap();
        let q = expectation(&Observable::quadrature_q(30).unwrap(), &psi).unwrap();
        let p = expectation(&Observable::quadrature_p(30).unwrap(), &psi).unwrap();
        assert!((q - 2f64.sqrt() * alpha.re).abs() < 1e-8);
        assert!((p - 2f64.sqrt() * alpha.im).abs() < 1e-8);
    }

    #[test]
    fn thermal_state_population() {
        let rho = make_thermal_state(1.0, 40).unwrap();
        let n = expectation(&Observable::number(40).unwrap(), &rho).unwrap();
        assert!((n - 1.0).abs() < 1e-9);
        assert!(make_thermal_state(1.0, 10).is_err());
    }

    #[test]
    fn invalid_constructors() {
        assert!(matches!(
            PureState::from_slice(&[c(1.0, 0.0), c(1.0, 0.0)]),
            Err(StateError::NotNormalized(_))
        ));
        let bad = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ZERO]);
        assert!(matches!(
            DensityMatrix::new(bad.clone()),
            Err(StateError::NotHermitian(_))
        ));
        assert!(matches!(
            Observable::new(bad),
            Err(StateError::NotHermitian(_))
        ));
        let neg = CMatrix::from_diagonal(&CVector::from_column_slice(&[c(1.5, 0.0), c(-0.5, 0.0)]));
        assert!(matches!(
            DensityMatrix::new(neg),
            Err(StateError::NotPsd(_))
        ));
    }

    fn random_state(dim: usize, raw: &[(f64, f64)]) -> PureState {
        let v = CVector::from_iterator(dim, raw.iter().take(dim).map(|&(r, i)| c(r, i)));
        PureState::normalized(v).unwrap()
    }

    fn raw_vec() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8).prop_filter("nonzero", |v| {
            v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3
        })
    }

    proptest! {
        #[test]
        fn pure_state_identities(dim in 1usize..8, raw in raw_vec(), h in prop::collection::vec(-2.0f64..2.0, 64)) {
            let psi = random_state(dim, &raw);
            prop_assert!((overlap(&psi, &psi).unwrap() - 1.0).abs() < 1e-10);
            let m = CMatrix::from_fn(dim, dim, |i, j| c(h[i * 8 + j], h[j * 8 + i] * 0.5));
            let obs = Observable::new(linalg::hermitian_part(&m)).unwrap();
            let mean = expectation(&obs, &psi).unwrap();
            let second = expectation(&obs.squared(), &psi).unwrap();
            let sd = fluctuation(&obs, &psi).unwrap();
            prop_assert!((sd * sd - (second - mean * mean)).abs() < 1e-10);
        }

        #[test]
        fn overlap_equals_double_sum_in_eigenbasis(
            dim in 1usize..8,
            ra in raw_vec(),
            rb in raw_vec(),
            wa in 0.0f64..1.0,
            h in prop::collection::vec(-2.0f64..2.0, 64),
        ) {
            let a = random_state(dim, &ra);
            let b = random_state(dim, &rb);
            let mixed = DensityMatrix::new(
                a.to_density().matrix().scale(wa) + b.to_density().matrix().scale(1.0 - wa),
            ).unwrap();
            let m = CMatrix::from_fn(dim, dim, |i, j| c(h[i * 8 + j], h[j * 8 + i]));
            let obs = Observable::new(linalg::hermitian_part(&m)).unwrap();
            let (_, basis) = obs.spectrum();
            // sum_{f,g} <a_f|rho_i|a_g><a_g|rho_j|a_f>
            let ri = basis.adjoint() * mixed.matrix() * &basis;
            let rj = basis.adjoint() * b.to_density().matrix() * &basis;
            let mut sum = ZERO;
            for f in 0..dim {
                for g in 0..dim {
                    sum += ri[(f, g)] * rj[(g, f)];
                }
            }
            prop_assert!((sum.re - overlap(&mixed, &b).unwrap()).abs() < 1e-8);
            prop_assert!(sum.im.abs() < 1e-8);
        }

        #[test]
        fn trace_distance_is_a_metric(dim in 1usize..6, ra in raw_vec(), rb in raw_vec(), rc in raw_vec()) {
            let a = random_state(dim, &ra);
            let b = random_state(dim, &rb);
            let cst = random_state(dim, &rc);
            let ab = trace_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, trace_distance(&a, &b).unwrap());
            prop_assert!((ab - trace_distance(&b, &a).unwrap()).abs() < 1e-12);
            let bc = trace_distance(&b, &cst).unwrap();
            let ac = trace_distance(&a, &cst).unwrap();
            prop_assert!(ac <= ab + bc + 1e-10);
            prop_assert!(ab <= 1.0 + 1e-10);
        }

        #[test]
        fn coherent_overlap_closed_form(ar in -1.4f64..1.4, ai in -1.4f64..1.4, br in -1.4f64..1.4, bi in -1.4f64..1.4) {
            let alpha = c(ar, ai);
            let beta = c(br, bi);
            let a = make_coherent_state(alpha, 30).unwrap();
            let b = make_coherent_state(beta, 30).unwrap();
            let expected = (-(alpha - beta).norm_sqr()).exp();
            prop_assert!((overlap(&a, &b).unwrap() - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn independent_states_have_nonsingular_gram() {
        let states: Vec<_> = [0.0, 0.5, 1.0, 1.5]
            .iter()
            .map(|&r| make_coherent_state(c(r, 0.2 * r), 30).unwrap())
            .collect();
        assert!(gram_matrix(&states).unwrap().min_eigenvalue() > 1e-12);
    }
}
