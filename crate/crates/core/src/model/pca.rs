use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{AthError, Result};

/// Top-`r` principal directions of the column-sample matrix `x` (`d × n`),
/// as a `d × r` matrix with orthonormal columns in descending eigenvalue
/// order. Each column is signed so that its largest-magnitude entry is
/// positive (first such entry on ties).
pub fn pca_projection(x: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let (d, n) = x.shape();
    if n < 2 {
        return Err(AthError::InvalidArgument(
            "PCA needs at least 2 samples".into(),
        ));
    }
    if r == 0 || r > d {
        return Err(AthError::InvalidArgument(format!(
            "PCA dimension {r} must lie in [1, {d}]"
        )));
    }
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&centered * centered.transpose()) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut a = DMatrix::zeros(d, r);
    for (k, &idx) in order.iter().take(r).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for i in 1..d {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        a.set_column(k, &(v * sign));
    }
    Ok(a)
}
