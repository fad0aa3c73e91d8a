//! Fixtures shared by the benchmarks.

use num_complex::Complex64;
use ultrasemi::{CVector, MatrixOperator};

/// `diag(-1, -2)` with the all-ones vector.
pub fn diag12() -> (MatrixOperator, CVector) {
    let op = MatrixOperator::diagonal_real(&[-1.0, -2.0]).expect("finite diagonal");
    (op, CVector::from_element(2, Complex64::new(1.0, 0.0)))
}

/// A non-normal 3x3 matrix with spectral abscissa below zero.
pub fn non_normal3() -> (MatrixOperator, CVector) {
    let op = MatrixOperator::from_real_rows(&[&[-1.0, 0.5, 0.0], &[0.2, -1.5, 0.3], &[0.0, 0.4, -0.7]])
        .expect("finite rows");
    (op, CVector::from_element(3, Complex64::new(1.0, 0.0)))
}

/// `n + 1` equispaced points of `[0, t1]`.
pub fn grid(t1: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t1 * k as f64 / n as f64).collect()
}
