//! Dense factorizations, delegated to faer and converted at the boundary.

use faer::Mat;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ`, singular values descending.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    Ok(ThinSvd {
        u: DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        singular_values: (0..s.nrows()).map(|i| s[i]).collect(),
        v: DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    })
}

/// Singular values of `a`, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    to_faer(a)
        .singular_values()
        .map_err(|e| Error::Factorization(format!("{e:?}")))
}

/// Right singular vectors from a full decomposition, as the columns of an
/// `ncols × ncols` orthogonal matrix ordered by descending singular value.
pub fn full_right_singular_vectors(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = to_faer(a)
        .svd()
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let v = svd.V();
    Ok(DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]))
}
