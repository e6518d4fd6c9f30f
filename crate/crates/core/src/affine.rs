//! Affine subspaces `{x : A x = b}` and the projection, reflection and
//! distance operators every solver is built from.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// A point of the ambient space.
pub type Point = DVector<f64>;

/// Relative consistency cutoff: a system is consistent when the residual of
/// its minimum-norm least-squares solution is at most `CONSISTENCY_TOL * (1 + |b|)`.
pub const CONSISTENCY_TOL: f64 = 1e-8;

/// One block `U = {x : A x = b}`.
///
/// The constructor factors `A` once. The orthonormal row-space basis `Q` and
/// the minimum-norm solution `x_p` make a projection cost two thin
/// matrix-vector products: `P(x) = x - Q Qᵀ (x - x_p)`.
#[derive(Debug, Clone)]
pub struct AffineSubspace {
    constraint_matrix: DMatrix<f64>,
    rhs: DVector<f64>,
    row_basis: DMatrix<f64>,
    anchor: Point,
    rank: usize,
    label: usize,
}

impl AffineSubspace {
    /// Builds the subspace `{x : A x = b}`, failing if `b` is not in the range of `A`.
    pub fn new(constraint_matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        let (rows, cols) = constraint_matrix.shape();
        if rows == 0 {
            return Err(Error::EmptyInput("constraint matrix has no rows"));
        }
        if cols == 0 {
            return Err(Error::EmptyInput("constraint matrix has no columns"));
        }
        if rhs.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: rhs.len(),
            });
        }
        if !constraint_matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("constraint matrix"));
        }
        if !rhs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }

        let svd = linalg::thin_svd(&constraint_matrix)?;
        let sigma_max = svd.singular_values.first().copied().unwrap_or(0.0);
        let threshold = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
        let rank = svd
            .singular_values
            .iter()
            .take_while(|&&s| sigma_max > 0.0 && s > threshold)
            .count();

        let row_basis = svd.v.columns(0, rank).into_owned();
        let mut anchor = DVector::zeros(cols);
        for j in 0..rank {
            let coeff = svd.u.column(j).dot(&rhs) / svd.singular_values[j];
            anchor.axpy(coeff, &svd.v.column(j), 1.0);
        }

        let residual = (&constraint_matrix * &anchor - &rhs).norm();
        let tolerance = CONSISTENCY_TOL * (1.0 + rhs.norm());
        if residual.is_nan() || residual > tolerance {
            return Err(Error::InconsistentSystem {
                residual,
                tolerance,
            });
        }

        Ok(Self {
            constraint_matrix,
            rhs,
            row_basis,
            anchor,
            rank,
            label: 0,
        })
    }

    /// Builds a subspace from row-major slices, mostly for small hand-made cases.
    pub fn from_rows(rows: &[&[f64]], rhs: &[f64]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(
            DMatrix::from_row_slice(rows.len(), cols, &flat),
            DVector::from_column_slice(rhs),
        )
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn constraint_matrix(&self) -> &DMatrix<f64> {
        &self.constraint_matrix
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// Numerical rank of the constraint matrix.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ambient_dim(&self) -> usize {
        self.constraint_matrix.ncols()
    }

    pub fn row_count(&self) -> usize {
        self.constraint_matrix.nrows()
    }

    /// Dimension of the direction space, `n - rank`.
    pub fn dim(&self) -> usize {
        self.ambient_dim() - self.rank
    }

    /// Orthonormal basis (as columns) of the row space of the constraint matrix.
    pub fn row_basis(&self) -> &DMatrix<f64> {
        &self.row_basis
    }

    /// The minimum-norm point of the subspace.
    pub fn anchor(&self) -> &Point {
        &self.anchor
    }

    fn check_dim(&self, x: &Point) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Orthogonal projection `P_U(x)`.
    pub fn project(&self, x: &Point) -> Result<Point> {
        self.check_dim(x)?;
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &Point) -> Point {
        let offset = x - &self.anchor;
        let coeffs = self.row_basis.tr_mul(&offset);
        let mut z = x.clone();
        z.gemv(-1.0, &self.row_basis, &coeffs, 1.0);
        z
    }

    /// Reflection `R_U(x) = 2 P_U(x) - x`.
    pub fn reflect(&self, x: &Point) -> Result<Point> {
        self.check_dim(x)?;
        Ok(self.reflect_unchecked(x))
    }

    pub(crate) fn reflect_unchecked(&self, x: &Point) -> Point {
        let mut r = self.project_unchecked(x);
        r.axpy(-1.0, x, 2.0);
        r
    }

    /// Euclidean distance from `x` to the subspace.
    pub fn distance(&self, x: &Point) -> Result<f64> {
        self.check_dim(x)?;
        Ok((x - self.project_unchecked(x)).norm())
    }

    /// `|A x - b|`, the raw residual of the defining system.
    pub fn equation_residual(&self, x: &Point) -> Result<f64> {
        self.check_dim(x)?;
        Ok((&self.constraint_matrix * x - &self.rhs).norm())
    }

    /// Orthonormal basis (as columns) of the null space of the constraint
    /// matrix, i.e. of the direction space of `U`. Empty when `U` is a point.
    pub fn direction_basis(&self) -> DMatrix<f64> {
        let n = self.ambient_dim();
        let dim = self.dim();
        if dim == 0 {
            return DMatrix::zeros(n, 0);
        }
        if self.rank == 0 {
            return DMatrix::identity(n, n);
        }
        let v = linalg::full_right_singular_vectors(&self.constraint_matrix)
            .expect("constraint matrix factored at construction");
        v.columns(self.rank, dim).into_owned()
    }
}

/// Stacks the blocks into one system and factors it, giving `S = ∩ U_i` as a
/// single subspace.
pub fn intersection(subspaces: &[AffineSubspace]) -> Result<AffineSubspace> {
    let first = subspaces.first().ok_or(Error::EmptyInput("no subspaces"))?;
    let n = first.ambient_dim();
    let total_rows: usize = subspaces.iter().map(AffineSubspace::row_count).sum();
    let mut stacked = DMatrix::zeros(total_rows, n);
    let mut rhs = DVector::zeros(total_rows);
    let mut offset = 0;
    for u in subspaces {
        if u.ambient_dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: u.ambient_dim(),
            });
        }
        let rows = u.row_count();
        stacked
            .rows_mut(offset, rows)
            .copy_from(&u.constraint_matrix);
        rhs.rows_mut(offset, rows).copy_from(&u.rhs);
        offset += rows;
    }
    AffineSubspace::new(stacked, rhs).map_err(|e| match e {
        Error::InconsistentSystem {
            residual,
            tolerance,
        } => Error::EmptyIntersection {
            residual,
            tolerance,
        },
        other => other,
    })
}

/// Best approximation of `x` in `S = ∩ U_i`, from one direct factorization
/// of the stacked system.
pub fn project_intersection(subspaces: &[AffineSubspace], x: &Point) -> Result<Point> {
    intersection(subspaces)?.project(x)
}

/// `max_i dist(x, U_i)`.
pub fn residual(subspaces: &[AffineSubspace], x: &Point) -> Result<f64> {
    subspaces
        .iter()
        .try_fold(0.0_f64, |acc, u| Ok(acc.max(u.distance(x)?)))
}
