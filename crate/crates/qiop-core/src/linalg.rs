//! Thin helpers over dense complex matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = nalgebra::DVector<Complex64>;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const C_I: Complex64 = Complex64::new(0.0, 1.0);

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// i^e for e taken mod 4.
pub fn i_pow(e: u8) -> Complex64 {
    match e % 4 {
        0 => C_ONE,
        1 => C_I,
        2 => -C_ONE,
        _ => -C_I,
    }
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_unitary(u: &CMat, tol: f64) -> bool {
    if u.nrows() != u.ncols() {
        return false;
    }
    let prod = u.adjoint() * u;
    max_abs_diff(&prod, &identity(u.nrows())) <= tol
}

/// State-weighted Hermitian form ⟨A, B⟩_σ = tr(A†Bσ).
pub fn sigma_form(a: &CMat, b: &CMat, sigma: &CMat) -> Complex64 {
    (a.adjoint() * b * sigma).trace()
}

/// ‖A‖²_σ = tr(A†Aσ). Real up to rounding for positive semidefinite σ.
pub fn sigma_norm2(a: &CMat, sigma: &CMat) -> f64 {
    sigma_form(a, a, sigma).re
}

/// Operator (spectral) norm, via the top eigenvalue of A†A.
pub fn op_norm(a: &CMat) -> f64 {
    let gram = a.adjoint() * a;
    let (vals, _) = hermitian_eigen(&gram);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending with
/// matching normalized eigenvector columns.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    assert_eq!(m.nrows(), m.ncols());
    let defect = max_abs_diff(&m.adjoint(), m);
    assert!(defect <= 1e-9, "matrix not Hermitian (defect {defect:.2e})");
    let se = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Standard gate constants.
pub mod gates {
    use super::*;

    pub fn x() -> CMat {
        CMat::from_row_slice(2, 2, &[C_ZERO, C_ONE, C_ONE, C_ZERO])
    }

    pub fn y() -> CMat {
        CMat::from_row_slice(2, 2, &[C_ZERO, -C_I, C_I, C_ZERO])
    }

    pub fn z() -> CMat {
        CMat::from_row_slice(2, 2, &[C_ONE, C_ZERO, C_ZERO, -C_ONE])
    }

    pub fn h() -> CMat {
        let s = Complex64::new(1.0 / 2.0_f64.sqrt(), 0.0);
        CMat::from_row_slice(2, 2, &[s, s, s, -s])
    }

    pub fn s() -> CMat {
        CMat::from_row_slice(2, 2, &[C_ONE, C_ZERO, C_ZERO, C_I])
    }

    pub fn cnot() -> CMat {
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = C_ONE;
        m[(1, 1)] = C_ONE;
        m[(2, 3)] = C_ONE;
        m[(3, 2)] = C_ONE;
        m
    }

    pub fn cz() -> CMat {
        let mut m = identity(4);
        m[(3, 3)] = -C_ONE;
        m
    }
}
