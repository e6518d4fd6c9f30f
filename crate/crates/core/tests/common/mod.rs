#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pcrm::problem::{build_planted_instance, NormalStream};
use pcrm::{AffineSubspace, Point, ProblemInstance};

/// Nearest point to `x` on `{z : A z = b}` from the KKT system
/// `[I Aᵀ; A 0] [z; λ] = [x; b]`, solved by full-pivot LU. Requires `A` to
/// have full row rank.
pub fn kkt_projection(a: &DMatrix<f64>, b: &DVector<f64>, x: &Point) -> Point {
    let (m, n) = a.shape();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).fill_with_identity();
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(x);
    rhs.rows_mut(n, m).copy_from(b);
    let sol = kkt
        .full_piv_lu()
        .solve(&rhs)
        .expect("KKT system is nonsingular");
    sol.rows(0, n).into_owned()
}

/// KKT projection onto a single block.
pub fn kkt_block(u: &AffineSubspace, x: &Point) -> Point {
    kkt_projection(u.constraint_matrix(), u.rhs(), x)
}

/// KKT projection onto the intersection of an instance with full-row-rank stacking.
pub fn kkt_instance(inst: &ProblemInstance, x: &Point) -> Point {
    let (a, b) = inst.stacked();
    kkt_projection(&a, &b, x)
}

/// Haar-ish random orthogonal matrix from the Householder QR of a Gaussian matrix.
pub fn random_orthogonal(n: usize, stream: &mut NormalStream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| stream.next_normal());
    g.qr().q()
}

pub fn uniform_int(stream: &mut NormalStream, lo: usize, hi: usize) -> usize {
    lo + ((stream.uniform() * (hi - lo + 1) as f64) as usize).min(hi - lo)
}

/// Planted instance with `blocks` blocks whose row counts are drawn from `rows`.
pub fn random_planted(
    stream: &mut NormalStream,
    n: usize,
    blocks: usize,
    rows: (usize, usize),
    seed: u64,
) -> ProblemInstance {
    let counts: Vec<usize> = (0..blocks)
        .map(|_| uniform_int(stream, rows.0, rows.1))
        .collect();
    build_planted_instance(n, &counts, 0.0, seed).unwrap()
}

/// A random point of `U`: KKT projection of a Gaussian point.
pub fn random_point_in(u: &AffineSubspace, stream: &mut NormalStream) -> Point {
    let x = stream.normal_vector(u.ambient_dim());
    kkt_block(u, &x)
}

/// Relative deviation `|a - b| / max(|b|, floor)`.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}
