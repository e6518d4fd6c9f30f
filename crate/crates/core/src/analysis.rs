//! Geometric diagnostics: direction spaces, the Friedrichs angle between two
//! blocks, the two-set error bound and a sampled linear-regularity constant.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::affine::{intersection, residual, AffineSubspace};
use crate::error::Result;
use crate::linalg;
use crate::parallel::WorkerPool;
use crate::problem::{NormalStream, ProblemInstance};

/// Principal cosines at or above `1 - INTERSECTION_EPS` are attributed to the
/// common direction space and deflated.
pub const INTERSECTION_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    pub friedrichs_cosine: f64,
    pub error_bound_constant: f64,
    pub intersection_dim: usize,
    /// Cosines of all principal angles between the direction spaces, descending.
    pub principal_cosines: Vec<f64>,
}

/// Orthonormal basis of the direction space `Û` (null space of `A`).
pub fn direction_basis(u: &AffineSubspace) -> DMatrix<f64> {
    u.direction_basis()
}

/// `√(1 + 4 / (1 - c²))`.
pub fn error_bound_from_cosine(cosine: f64) -> f64 {
    (1.0 + 4.0 / (1.0 - cosine * cosine)).sqrt()
}

/// Principal angles between `Û` and `V̂` with the common subspace split off.
pub fn angle_report(u: &AffineSubspace, v: &AffineSubspace) -> Result<AngleReport> {
    intersection(&[u.clone(), v.clone()])?;
    let bu = u.direction_basis();
    let bv = v.direction_basis();
    let mut principal_cosines: Vec<f64> = if bu.ncols() == 0 || bv.ncols() == 0 {
        Vec::new()
    } else {
        linalg::singular_values(&bu.tr_mul(&bv))?
            .into_iter()
            .map(|s| s.clamp(0.0, 1.0))
            .collect()
    };
    principal_cosines.sort_by(|a, b| b.total_cmp(a));
    let intersection_dim = principal_cosines
        .iter()
        .take_while(|&&c| c >= 1.0 - INTERSECTION_EPS)
        .count();
    let friedrichs_cosine = principal_cosines
        .get(intersection_dim)
        .copied()
        .unwrap_or(0.0);
    Ok(AngleReport {
        friedrichs_cosine,
        error_bound_constant: error_bound_from_cosine(friedrichs_cosine),
        intersection_dim,
        principal_cosines,
    })
}

/// Cosine of the Friedrichs angle between `U` and `V`, in `[0, 1)`.
pub fn friedrichs_cosine(u: &AffineSubspace, v: &AffineSubspace) -> Result<f64> {
    Ok(angle_report(u, v)?.friedrichs_cosine)
}

/// `r(U, V)` with `dist(x, U ∩ V) <= r max{dist(x, U), dist(x, V)}`.
pub fn error_bound_constant(u: &AffineSubspace, v: &AffineSubspace) -> Result<f64> {
    Ok(angle_report(u, v)?.error_bound_constant)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub samples: usize,
    pub violations: usize,
    pub bound: f64,
    /// Largest observed `dist(x, U ∩ V) / max{dist(x, U), dist(x, V)}`.
    pub max_ratio: f64,
    pub passed: bool,
}

/// Samples `x = s + z` with `s ∈ U ∩ V`, `z` standard normal, and counts
/// violations of the two-set error bound beyond `slack (1 + dist(x, U ∩ V))`.
pub fn verify_two_set_bound(
    u: &AffineSubspace,
    v: &AffineSubspace,
    samples: usize,
    seed: u64,
    slack: f64,
) -> Result<BoundCheck> {
    let report = angle_report(u, v)?;
    let pair = [u.clone(), v.clone()];
    let common = intersection(&pair)?;
    let n = u.ambient_dim();
    let bound = report.error_bound_constant;
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for i in 0..samples {
        let mut stream = NormalStream::substream(seed, i as u64);
        let x = common.anchor() + stream.normal_vector(n);
        let lhs = common.distance(&x)?;
        let worst = residual(&pair, &x)?;
        if worst > 0.0 {
            max_ratio = max_ratio.max(lhs / worst);
        }
        if lhs > bound * worst + slack * (1.0 + lhs) {
            violations += 1;
        }
    }
    Ok(BoundCheck {
        samples,
        violations,
        bound,
        max_ratio,
        passed: violations == 0,
    })
}

/// Sampled linear-regularity constant of the instance.
pub fn estimate_regularity(instance: &ProblemInstance, samples: usize, seed: u64) -> Result<f64> {
    estimate_regularity_on(&WorkerPool::sequential(), instance, samples, seed)
}

/// Largest observed `dist(x, S) / max_i dist(x, U_i)` over `samples` points
/// `x = s + z` (`s ∈ S`, `z` standard normal). Sample `i` draws from substream
/// `i` of `seed`, so the result does not depend on the pool size. Points that
/// already lie in `S` are skipped; the result is 1 when every sample is.
pub fn estimate_regularity_on(
    pool: &WorkerPool,
    instance: &ProblemInstance,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let blocks = instance.subspaces();
    let common = intersection(blocks)?;
    let n = instance.ambient_dim();
    let ratios = pool.map_range(samples, |i| -> Result<Option<f64>> {
        let mut stream = NormalStream::substream(seed, i as u64);
        let x = common.anchor() + stream.normal_vector(n);
        let worst = residual(blocks, &x)?;
        if worst <= 0.0 {
            return Ok(None);
        }
        Ok(Some(common.distance(&x)? / worst))
    });
    let mut best: Option<f64> = None;
    for r in ratios {
        if let Some(r) = r? {
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    Ok(best.unwrap_or(1.0))
}
