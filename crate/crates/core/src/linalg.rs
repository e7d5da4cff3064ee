//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Ratio of largest to smallest eigenvalue magnitude of a symmetric matrix.
pub(crate) fn condition_number(eigenvalues: &DVector<f64>) -> f64 {
    let max = eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let min = eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `mat * y = rhs` for a symmetric, possibly indefinite `mat` through
/// its eigendecomposition. Returns the solution and the condition number;
/// fails when the condition number exceeds `max_condition`.
pub(crate) fn solve_symmetric(
    mat: &DMatrix<f64>,
    rhs: &DVector<f64>,
    max_condition: f64,
) -> Result<(DVector<f64>, f64)> {
    let eig = SymmetricEigen::new(mat.clone());
    let condition = condition_number(&eig.eigenvalues);
    if !condition.is_finite() || condition > max_condition {
        return Err(Error::IllConditioned { condition });
    }
    let projected = eig.eigenvectors.transpose() * rhs;
    let scaled = projected.component_div(&eig.eigenvalues);
    Ok((&eig.eigenvectors * scaled, condition))
}

/// Diagonal scaling `D` with `D * mat * D` having unit diagonal.
pub(crate) fn equilibration(mat: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        mat.nrows(),
        mat.diagonal().iter().map(|&v| {
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        }),
    )
}

pub(crate) fn scale_symmetric(mat: &DMatrix<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(mat.nrows(), mat.ncols(), |i, j| {
        scale[i] * mat[(i, j)] * scale[j]
    })
}

/// Largest `|a_ij - a_ji|` relative to the largest entry.
#[cfg(test)]
pub(crate) fn asymmetry(mat: &DMatrix<f64>) -> f64 {
    let scale = mat.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..mat.nrows() {
        for j in (i + 1)..mat.ncols() {
            worst = worst.max((mat[(i, j)] - mat[(j, i)]).abs());
        }
    }
    worst / scale
}
