//! Small dense-matrix helpers shared by the modules.
//!
//! Everything here works on `nalgebra` dynamic matrices over `Complex64`.
//! Hermitian eigensolves go through `SymmetricEigen`, which handles complex
//! Hermitian input and returns real eigenvalues.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest entrywise deviation `|m_ij - conj(m_ji)|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    hermitian_defect(m) <= tol
}

/// Averages `m` with its adjoint so round-off asymmetry does not leak into
/// the eigensolver.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues (ascending) and matching eigenvectors (columns) of the
/// Hermitian part of `m`.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = hermitian_part(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).last().copied().unwrap_or(0.0)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn hadamard(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.component_mul(b)
}

/// Unit-modulus phase of `z`; `1` for `z = 0`.
pub fn phase(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        ONE
    } else {
        z / r
    }
}

pub fn outer(ket: &CVector, bra: &CVector) -> CMatrix {
    ket * bra.adjoint()
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_hermitian_spectrum() {
        // Pauli-y has eigenvalues -1 and 1.
        let y = CMatrix::from_row_slice(
            2,
            2,
            &[
                ZERO,
                Complex64::new(0.0, -1.0),
                Complex64::new(0.0, 1.0),
                ZERO,
            ],
        );
        let (vals, vecs) = hermitian_eigen(&y);
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        for (k, &lambda) in vals.iter().enumerate() {
            let v = vecs.column(k).into_owned();
            let r = &y * &v - v.scale(lambda);
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn phase_of_zero_is_one() {
        assert_eq!(phase(ZERO), ONE);
        let p = phase(Complex64::new(0.0, -3.0));
        assert!((p - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn trace_of_product_matches_product() {
        let a = CMatrix::from_fn(3, 3, |i, j| Complex64::new(i as f64 + 1.0, j as f64 - 0.5));
        let b = CMatrix::from_fn(3, 3, |i, j| Complex64::new(j as f64 * 0.3, i as f64));
        assert!((trace_of_product(&a, &b) - trace(&(&a * &b))).norm() < 1e-12);
    }
}
