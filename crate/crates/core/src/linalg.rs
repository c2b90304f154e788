//! Small dense helpers on top of nalgebra.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};

pub type Complex64 = Complex<f64>;

/// Singular values of `m`, largest first.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values strictly above `rel_tol * sigma_max`; 0 for a zero matrix.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        Some(&max) if max > 0.0 => sv.iter().filter(|&&s| s > rel_tol * max).count(),
        _ => 0,
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Frobenius norm.
pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    libm::sqrt(m.iter().map(|v| v * v).sum::<f64>())
}
