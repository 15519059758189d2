use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigen-decomposition of a Hermitian covariance, sorted by descending
/// eigenvalue and split at the model order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSplit {
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `Ñ × L̂`.
    pub signal: DMatrix<Complex64>,
    /// `Ñ × (Ñ − L̂)`.
    pub noise: DMatrix<Complex64>,
}

impl EigenSplit {
    pub fn order(&self) -> usize {
        self.signal.ncols()
    }
}

/// Descending eigenvalues only, clamped at zero.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Full decomposition with eigenpairs in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEigen {
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Columns matching `eigenvalues`.
    pub vectors: DMatrix<Complex64>,
}

impl HermitianEigen {
    /// Signal basis from the first `order` vectors, noise basis from the
    /// rest.
    pub fn split(&self, order: usize) -> Result<EigenSplit> {
        let n = self.vectors.nrows();
        if order >= n {
            return Err(Error::input(format!(
                "model order {order} must be below the subarray length {n}"
            )));
        }
        Ok(EigenSplit {
            eigenvalues: self.eigenvalues.clone(),
            signal: self.vectors.columns(0, order).into_owned(),
            noise: self.vectors.columns(order, n - order).into_owned(),
        })
    }
}

pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    let n = m.nrows();
    if m.ncols() != n || n == 0 {
        return Err(Error::input("covariance must be square and nonempty"));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("Hermitian eigen-decomposition did not converge"))?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite eigenvalue"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Ok(HermitianEigen {
        eigenvalues: idx.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
        vectors: DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]),
    })
}
