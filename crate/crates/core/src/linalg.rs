//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix. Only the lower triangle is read.
pub fn sym_eigen(m: &Matrix) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or(Error::EigenNonConvergence)
}

pub fn sym_eigenvalues(m: &Matrix) -> Result<Vector> {
    Ok(sym_eigen(m)?.eigenvalues)
}

pub fn lambda_min(m: &Matrix) -> Result<f64> {
    Ok(sym_eigenvalues(m)?.min())
}

/// Spectral norm of a symmetric matrix, i.e. its largest absolute eigenvalue.
pub fn sym_spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(sym_eigenvalues(m)?.amax())
}

/// Spectral norm of a general matrix via its singular values.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn mean_vectors(blocks: &[Vector]) -> Vector {
    let mut acc = Vector::zeros(blocks[0].len());
    for b in blocks {
        acc += b;
    }
    acc / blocks.len() as f64
}

pub fn mean_matrices(blocks: &[Matrix]) -> Matrix {
    let (r, c) = blocks[0].shape();
    let mut acc = Matrix::zeros(r, c);
    for b in blocks {
        acc += b;
    }
    acc / blocks.len() as f64
}
