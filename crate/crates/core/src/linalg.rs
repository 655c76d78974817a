//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this (after scaling) are treated as zero when whitening.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Tolerance on negative eigenvalues before a matrix is rejected as non-PSD.
pub const PSD_TOL: f64 = 1e-10;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigen-decomposition with eigenvalues sorted ascending.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().min()
}

/// Symmetric square root of a PSD matrix; tiny negative eigenvalues are clipped.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sorted_eigen(m);
    if vals.len() > 0 && vals[0] < -PSD_TOL {
        return Err(Error::NotPsd { min_eig: vals[0] });
    }
    let d = DMatrix::from_diagonal(&vals.map(|v| v.max(0.0).sqrt()));
    Ok(&vecs * d * vecs.transpose())
}

/// Inverse symmetric square root; fails when the spectrum falls under the floor.
pub fn inv_sym_sqrt(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sorted_eigen(m);
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    if vals.len() == 0 || vals[0] <= floor * top.max(1e-300) {
        return Err(Error::Singular(format!(
            "smallest eigenvalue {:e} below floor (largest {:e})",
            vals.get(0).copied().unwrap_or(0.0),
            top
        )));
    }
    let d = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
    Ok(&vecs * d * vecs.transpose())
}

/// `(1/n) Xᵀ X`.
pub fn second_moment(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows().max(1) as f64;
    (x.transpose() * x) / n
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Centers the rows and whitens them by the empirical covariance.
pub fn whiten(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mu = column_means(x);
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mu.transpose();
    }
    let cov = second_moment(&c);
    let w = inv_sym_sqrt(&cov, EIGEN_FLOOR)?;
    Ok(c * w)
}

/// Quadratic form `‖M^{1/2} v‖₂` for PSD `M`.
pub fn mahalanobis_norm(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    let root = sym_sqrt(m)?;
    Ok((root * v).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sym_sqrt(&m).unwrap();
        assert!((&r * &r - &m).norm() < 1e-12);
    }

    #[test]
    fn non_psd_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(sym_sqrt(&m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn whitened_covariance_is_identity() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, -2.0, 0.0, 1.0]);
        let z = whiten(&x).unwrap();
        let c = second_moment(&z);
        assert!((c - DMatrix::identity(2, 2)).norm() < 1e-10);
    }
}
