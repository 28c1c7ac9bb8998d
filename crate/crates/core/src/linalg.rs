//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric square root `V diag(sqrt(max(l, 1e-12))) V'`.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(1e-12).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Number of singular values above `rel * sigma_max` (0 for a zero matrix).
pub fn numerical_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel * max).count()
}

/// Like [`numerical_rank`] but the threshold is `rel * max(sigma_max, scale)`,
/// so a difference of nearly equal matrices of size `scale` has rank 0.
pub fn numerical_rank_scaled(m: &DMatrix<f64>, rel: f64, scale: f64) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max).max(scale);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel * max).count()
}

/// `sigma_min / sigma_max`.
pub fn inverse_condition(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if max > 0.0 {
        min / max
    } else {
        0.0
    }
}

/// Least-squares solution of `x b = y` for full-column-rank `x`.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    x.clone().svd(true, true).solve(y, 1e-14).map_err(|_| Error::SingularDesign)
}

/// Cholesky factor of `k + jitter I`, retrying with the jitter multiplied by
/// ten up to three times.
pub fn cholesky_with_jitter(k: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    let mut j = jitter;
    for _ in 0..4 {
        let mut a = k.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += j;
        }
        if let Some(c) = a.cholesky() {
            return Ok(c.l());
        }
        j *= 10.0;
    }
    Err(Error::KernelNotPsd(j / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let r = sym_sqrt(&m);
        assert!((&r * &r - &m).abs().max() < 1e-12);
        assert!((&r - r.transpose()).abs().max() < 1e-14);
    }

    #[test]
    fn rank_and_least_squares() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&x, 1e-8), 2);
        assert_eq!(numerical_rank(&DMatrix::from_row_slice(2, 1, &[0.0, 0.0]), 1e-8), 0);
        let b = least_squares(&x, &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(cholesky_with_jitter(&k, 1e-10), Err(Error::KernelNotPsd(_))));
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_with_jitter(&k, 1e-10).is_ok());
    }
}
