//! Circumcenter of a finite point set: the point of the affine hull that is
//! equidistant to every input.
//!
//! With base point `x_0` and differences `d_j = x_j - x_0`, the circumcenter is
//! `x_0 + Σ α_j d_j` where `α` solves the Gram system
//! `Σ_j α_j ⟨d_j, d_i⟩ = ½ |d_i|²`. Affinely dependent inputs make the Gram
//! matrix singular; the minimum-norm least-squares solution still lands on
//! the unique equidistant point of the hull whenever one exists.

use nalgebra::{DMatrix, DVector};

use crate::affine::Point;
use crate::error::{Error, Result};
use crate::linalg;

/// Backward-error level above which the Gram system is declared
/// inconsistent: the solve fails when `|G α - r| > SYSTEM_TOL (σ_max |α| + |r|)`.
pub const SYSTEM_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CircumcenterSystem {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub base_point: Point,
    pub differences: Vec<Point>,
}

impl CircumcenterSystem {
    /// Assembles the system from a base point and the remaining points.
    pub fn from_base(base_point: Point, others: &[Point]) -> Result<Self> {
        let n = base_point.len();
        if !base_point.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("circumcenter input"));
        }
        let mut differences = Vec::with_capacity(others.len());
        for p in others {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: p.len(),
                });
            }
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("circumcenter input"));
            }
            differences.push(p - &base_point);
        }
        Ok(Self::from_differences(base_point, differences))
    }

    /// Assembles the system directly from `d_j = x_j - x_0`.
    ///
    /// Entries are filled in fixed index order and mirrored, so the matrix is
    /// exactly symmetric and independent of how the differences were produced.
    pub fn from_differences(base_point: Point, differences: Vec<Point>) -> Self {
        let m = differences.len();
        let mut gram = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                let g = differences[i].dot(&differences[j]);
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
            rhs[i] = 0.5 * gram[(i, i)];
        }
        Self {
            gram,
            rhs,
            base_point,
            differences,
        }
    }

    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    /// Minimum-norm least-squares coefficients `α`.
    pub fn coefficients(&self) -> Result<DVector<f64>> {
        let m = self.size();
        if m == 0 {
            return Ok(DVector::zeros(0));
        }
        let rhs_norm = self.rhs.norm();
        if rhs_norm == 0.0 {
            // every point coincides with the base point
            return Ok(DVector::zeros(m));
        }
        if !self.gram.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("gram matrix"));
        }

        let svd = linalg::thin_svd(&self.gram)?;
        let sigma_max = svd.singular_values[0];
        let cutoff = sigma_max * m as f64 * f64::EPSILON;

        let mut alpha = DVector::zeros(m);
        for (j, &sigma) in svd.singular_values.iter().enumerate() {
            if sigma > cutoff {
                let coeff = svd.u.column(j).dot(&self.rhs) / sigma;
                alpha.axpy(coeff, &svd.v.column(j), 1.0);
            }
        }

        // Backward-error test plus the uncertainty the inputs carry: each
        // difference is a computed `x_j - x_0` with absolute error around
        // `eps (|x_0| + |d|)`. Near a fixed point the differences are only a
        // few digits above that floor and the Gram system is consistent only
        // up to it.
        let d_max = self
            .differences
            .iter()
            .map(|d| d.norm())
            .fold(0.0, f64::max);
        let noise = 16.0 * f64::EPSILON * (self.base_point.norm() + d_max);
        let scale = (m as f64).sqrt();
        let residual = (&self.gram * &alpha - &self.rhs).norm();
        let tolerance = SYSTEM_TOL * (sigma_max * alpha.norm() + rhs_norm)
            + scale * 2.0 * d_max * noise * (scale * alpha.norm() + 1.0);
        if residual.is_nan() || residual > tolerance {
            return Err(Error::DegenerateSystem {
                residual,
                tolerance,
            });
        }
        Ok(alpha)
    }

    /// The circumcenter `x_0 + Σ α_j d_j`.
    pub fn solve(&self) -> Result<Point> {
        let alpha = self.coefficients()?;
        let mut center = self.base_point.clone();
        for (a, d) in alpha.iter().zip(&self.differences) {
            if *a != 0.0 {
                center.axpy(*a, d, 1.0);
            }
        }
        Ok(center)
    }
}

/// Gram system of `points`, using the first point as the base.
pub fn gram_system(points: &[Point]) -> Result<CircumcenterSystem> {
    let (first, rest) = points
        .split_first()
        .ok_or(Error::EmptyInput("circumcenter of no points"))?;
    CircumcenterSystem::from_base(first.clone(), rest)
}

/// Circumcenter of `points` within their affine hull.
pub fn circumcenter(points: &[Point]) -> Result<Point> {
    gram_system(points)?.solve()
}
