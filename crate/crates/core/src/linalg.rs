//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvalues below this (relative to the matrix scale) are treated as
/// rounding noise and clipped to zero when factorizing.
pub const PSD_CLIP: f64 = 1e-8;

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Returns `L` with `L Lᵀ = m` for a symmetric positive semidefinite `m`,
/// built from the eigendecomposition with eigenvalues above `-PSD_CLIP *
/// scale` clipped at zero. `None` if a more negative eigenvalue is found.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    if m.iter().all(|&v| v == 0.0) {
        return Some(DMatrix::zeros(n, n));
    }
    let scale = (m.trace() / n as f64).abs().max(1.0);
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut v = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -PSD_CLIP * scale {
            return None;
        }
        let s = lambda.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    Some(v)
}

pub fn correlation_from_covariance(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt()
    })
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
