//! Thin bridges to nalgebra for factorizations ndarray does not provide.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

fn to_na(m: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Max absolute row sum.
pub(crate) fn inf_norm(m: ArrayView2<f64>) -> f64 {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of `gram + shift·I` by Cholesky, or `None` when the factorization fails
/// or the product with the inverse deviates from identity by more than `tol` (∞-norm).
pub(crate) fn shifted_spd_inverse(gram: ArrayView2<f64>, shift: f64, tol: f64) -> Option<Array2<f64>> {
    let n = gram.nrows();
    let mut shifted = gram.to_owned();
    shifted.diag_mut().mapv_inplace(|d| d + shift);
    let chol = nalgebra::Cholesky::new(to_na(shifted.view()))?;
    let inv = from_na(&chol.inverse());
    if !inv.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut check = shifted.dot(&inv);
    check.diag_mut().mapv_inplace(|d| d - 1.0);
    (inf_norm(check.view()) <= tol && n > 0).then_some(inv)
}

/// Largest eigenvalue modulus of a general real square matrix, via the real Schur form.
pub fn spectral_radius(m: ArrayView2<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    to_na(m)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rotation_has_unit_radius() {
        let r = array![[0.0, -1.0], [1.0, 0.0]];
        assert!((spectral_radius(r.view()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nilpotent_has_zero_radius() {
        let r = array![[0.0, 1.0], [0.0, 0.0]];
        assert!(spectral_radius(r.view()).abs() < 1e-12);
    }

    #[test]
    fn singular_gram_fails_without_shift() {
        let g = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(shifted_spd_inverse(g.view(), 0.0, 1e-8).is_none());
        let inv = shifted_spd_inverse(g.view(), 0.5, 1e-8).unwrap();
        let expected = array![[1.5, 1.0], [1.0, 1.5]];
        let prod = expected.dot(&inv);
        assert!((prod[[0, 0]] - 1.0).abs() < 1e-12 && prod[[0, 1]].abs() < 1e-12);
    }
}
