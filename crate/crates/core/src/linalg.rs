//! Symmetric eigenvalue helpers on dense matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100_000;

/// Largest absolute asymmetry `max |G_ij - G_ji|`.
pub fn asymmetry(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((g[(i, j)] - g[(j, i)]).abs());
        }
    }
    worst
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(g: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !g.is_square() || g.nrows() == 0 {
        return Err(Error::invalid(format!(
            "expected a non-empty square matrix, got {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let scale = g.amax().max(1.0);
    let asym = asymmetry(g);
    if asym > 1e-10 * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (|G - G^T| = {asym:e})"
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("matrix has non-finite entries"));
    }
    let eig = SymmetricEigen::try_new(g.clone(), f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::numeric("symmetric eigen-solve did not converge"))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(g: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(g)?[0])
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn spectral_norm_symmetric(g: &DMatrix<f64>) -> Result<f64> {
    let vals = symmetric_eigenvalues(g)?;
    Ok(vals[0].abs().max(vals[vals.len() - 1].abs()))
}

pub fn hadamard(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::invalid("Hadamard product needs equal shapes"));
    }
    Ok(a.component_mul(b))
}
