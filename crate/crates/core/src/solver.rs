//! Iteration operators and the driver loop.
//!
//! * F-SPM: `T(x) = p_0 x + Σ p_i P_i(x)`; Cimmino is the `p_0 = 0`, equal
//!   weights preset.
//! * CRM: circumcenter of `x, R_1 x, R_2 R_1 x, …, R_m ⋯ R_1 x`.
//! * P-CRM: circumcenter of `x, R_1 x, …, R_m x`, reflections computed
//!   independently on the worker pool.
//!
//! One reflection costs one projection; a CRM or P-CRM iteration on `ℓ`
//! blocks therefore counts `ℓ` projections.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::affine::{residual, AffineSubspace, Point};
use crate::circumcenter::CircumcenterSystem;
use crate::error::{Error, Result};
use crate::parallel::WorkerPool;
use crate::problem::ProblemInstance;

pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Absolute slack allowed when checking that F-SPM weights sum to one.
const WEIGHT_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fspm,
    Cimmino,
    Crm,
    Pcrm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fspm, Method::Cimmino, Method::Crm, Method::Pcrm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fspm => "fspm",
            Method::Cimmino => "cimmino",
            Method::Crm => "crm",
            Method::Pcrm => "pcrm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "fspm" => Ok(Method::Fspm),
            "cimmino" => Ok(Method::Cimmino),
            "crm" => Ok(Method::Crm),
            "pcrm" => Ok(Method::Pcrm),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// `|x_k - x⋆| / |x⋆| <= tol` against the instance's reference solution.
    RelErrToKnown,
    /// `max_i dist(x_k, U_i) <= tol (1 + |x_k|)`.
    FeasibilityResidual,
    /// `|x_{k+1} - x_k| <= tol`.
    StepNorm,
}

impl FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rel_err" | "rel_err_to_known" => Ok(StopRule::RelErrToKnown),
            "residual" | "feasibility" | "feasibility_residual" => {
                Ok(StopRule::FeasibilityResidual)
            }
            "step" | "step_norm" => Ok(StopRule::StepNorm),
            other => Err(Error::InvalidConfig(format!("unknown stop rule {other:?}"))),
        }
    }
}

/// Validated F-SPM weights `p_0, …, p_m`: `p_0 >= 0`, `p_i > 0`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(values: Vec<f64>, blocks: usize) -> Result<Self> {
        if values.len() != blocks + 1 {
            return Err(Error::InvalidWeights(format!(
                "expected {} weights (p_0..p_{blocks}), got {}",
                blocks + 1,
                values.len()
            )));
        }
        if values.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidWeights("weights must be finite".into()));
        }
        if values[0] < 0.0 {
            return Err(Error::InvalidWeights(format!(
                "p_0 = {} is negative",
                values[0]
            )));
        }
        if let Some((i, p)) = values.iter().enumerate().skip(1).find(|(_, p)| **p <= 0.0) {
            return Err(Error::InvalidWeights(format!(
                "p_{i} = {p} must be positive"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self(values))
    }

    /// `p_i = 1/(m+1)` for every `i`, identity term included.
    pub fn uniform(blocks: usize) -> Self {
        Self(vec![1.0 / (blocks + 1) as f64; blocks + 1])
    }

    /// Cimmino: `p_0 = 0`, `p_i = 1/m`.
    pub fn cimmino(blocks: usize) -> Self {
        let mut values = vec![1.0 / blocks as f64; blocks + 1];
        values[0] = 0.0;
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn blocks(&self) -> usize {
        self.0.len() - 1
    }

    /// Projections one F-SPM step performs: the number of positive `p_i`, `i >= 1`.
    pub fn projections_per_step(&self) -> usize {
        self.0[1..].iter().filter(|&&p| p > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Explicit F-SPM weights; `None` selects the method's preset.
    pub weights: Option<Vec<f64>>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub stop_rule: StopRule,
    pub workers: usize,
    /// Record `max_i dist(x_k, U_i)` for every iterate even when the stop
    /// rule does not need it. Costs `ℓ` extra projections per iterate that
    /// are neither counted nor timed.
    pub record_residuals: bool,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            weights: None,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            stop_rule: StopRule::RelErrToKnown,
            workers: 1,
            record_residuals: false,
        }
    }

    pub fn tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn stop_rule(mut self, stop_rule: StopRule) -> Self {
        self.stop_rule = stop_rule;
        self
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn record_residuals(mut self, on: bool) -> Self {
        self.record_residuals = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Weights the F-SPM family uses on `blocks` blocks.
    pub fn resolve_weights(&self, blocks: usize) -> Result<Weights> {
        match (&self.weights, self.method) {
            (Some(values), Method::Cimmino) if values.first() != Some(&0.0) => Err(
                Error::InvalidWeights("cimmino weights must have p_0 = 0".into()),
            ),
            (Some(values), _) => Weights::new(values.clone(), blocks),
            (None, Method::Cimmino) => Ok(Weights::cimmino(blocks)),
            (None, _) => Ok(Weights::uniform(blocks)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    DivergedNumerically,
}

/// Diagnostics for iterate `x_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: Option<f64>,
    pub distance: Option<f64>,
    pub projections: u64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub method: Method,
    pub records: Vec<IterationRecord>,
    pub status: Status,
}

impl IterationTrace {
    /// Steps taken; the trace holds one more record than this (for `x_0`).
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    pub fn projections(&self) -> u64 {
        self.records.last().map_or(0, |r| r.projections)
    }

    pub fn elapsed_s(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.elapsed_s)
    }

    /// Distances to the reference solution, where recorded.
    pub fn distances(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.distance).collect()
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub point: Point,
    pub trace: IterationTrace,
    /// `|x_final - x⋆| / |x⋆|` when a reference solution is known.
    pub rel_err: Option<f64>,
}

fn check_point(x: &Point, subspaces: &[AffineSubspace]) -> Result<()> {
    let first = subspaces.first().ok_or(Error::EmptyInput("no subspaces"))?;
    if x.len() != first.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: first.ambient_dim(),
            found: x.len(),
        });
    }
    Ok(())
}

/// One F-SPM step, `p_0 x + Σ p_i P_{U_i}(x)`.
pub fn fspm_step(x: &Point, subspaces: &[AffineSubspace], weights: &Weights) -> Result<Point> {
    fspm_step_on(&WorkerPool::sequential(), x, subspaces, weights)
}

/// F-SPM step with the block projections spread over `pool`; the weighted
/// sum is accumulated in block order.
pub fn fspm_step_on(
    pool: &WorkerPool,
    x: &Point,
    subspaces: &[AffineSubspace],
    weights: &Weights,
) -> Result<Point> {
    check_point(x, subspaces)?;
    if weights.blocks() != subspaces.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} blocks",
            weights.blocks() + 1,
            subspaces.len()
        )));
    }
    let p = weights.as_slice();
    let projections = pool.map(subspaces, |u| u.project_unchecked(x));
    let mut next = x * p[0];
    for (w, proj) in p[1..].iter().zip(&projections) {
        next.axpy(*w, proj, 1.0);
    }
    Ok(next)
}

/// One CRM step: circumcenter of `x` and its successively composed reflections.
pub fn crm_step(x: &Point, subspaces: &[AffineSubspace]) -> Result<Point> {
    check_point(x, subspaces)?;
    let mut differences = Vec::with_capacity(subspaces.len());
    let mut current = x.clone();
    for u in subspaces {
        current = u.reflect_unchecked(&current);
        differences.push(&current - x);
    }
    CircumcenterSystem::from_differences(x.clone(), differences).solve()
}

/// One P-CRM step: circumcenter of `x, R_1 x, …, R_m x`.
///
/// The output is bitwise identical for every pool size: each reflection is a
/// pure function of `x` and its block, and the Gram system is assembled in
/// block order afterwards.
pub fn pcrm_step(x: &Point, subspaces: &[AffineSubspace], pool: &WorkerPool) -> Result<Point> {
    check_point(x, subspaces)?;
    let differences = pool.map(subspaces, |u| {
        let mut d = u.reflect_unchecked(x);
        d -= x;
        d
    });
    CircumcenterSystem::from_differences(x.clone(), differences).solve()
}

enum Stepper {
    Fspm(Weights),
    Crm,
    Pcrm,
}

impl Stepper {
    fn step(&self, pool: &WorkerPool, x: &Point, subspaces: &[AffineSubspace]) -> Result<Point> {
        match self {
            Stepper::Fspm(weights) => fspm_step_on(pool, x, subspaces, weights),
            Stepper::Crm => crm_step(x, subspaces),
            Stepper::Pcrm => pcrm_step(x, subspaces, pool),
        }
    }

    fn projections_per_step(&self, blocks: usize) -> u64 {
        match self {
            Stepper::Fspm(weights) => weights.projections_per_step() as u64,
            Stepper::Crm | Stepper::Pcrm => blocks as u64,
        }
    }
}

/// Runs `config.method` from the null vector.
pub fn solve(instance: &ProblemInstance, config: &SolverConfig) -> Result<SolveOutcome> {
    let x0 = Point::zeros(instance.ambient_dim());
    solve_from(instance, config, &x0)
}

/// Runs `config.method` from `x0` until the stop rule fires or the iteration
/// cap is reached.
pub fn solve_from(
    instance: &ProblemInstance,
    config: &SolverConfig,
    x0: &Point,
) -> Result<SolveOutcome> {
    let pool = WorkerPool::new(config.workers)?;
    solve_with_pool(instance, config, x0, &pool)
}

/// Same as [`solve_from`] on a caller-owned pool (`config.workers` is ignored).
pub fn solve_with_pool(
    instance: &ProblemInstance,
    config: &SolverConfig,
    x0: &Point,
    pool: &WorkerPool,
) -> Result<SolveOutcome> {
    config.validate()?;
    let subspaces = instance.subspaces();
    check_point(x0, subspaces)?;
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("initial point"));
    }
    let reference = instance.known_solution();
    if config.stop_rule == StopRule::RelErrToKnown && reference.is_none() {
        return Err(Error::MissingReference);
    }
    let reference_norm = reference.map(|r| {
        let norm = r.norm();
        if norm > 0.0 {
            norm
        } else {
            1.0
        }
    });

    let stepper = match config.method {
        Method::Fspm | Method::Cimmino => Stepper::Fspm(config.resolve_weights(subspaces.len())?),
        Method::Crm => Stepper::Crm,
        Method::Pcrm => Stepper::Pcrm,
    };
    let per_step = stepper.projections_per_step(subspaces.len());

    let mut records = Vec::new();
    let mut x = x0.clone();
    let mut projections = 0u64;
    let mut elapsed = Duration::ZERO;
    let mut last_step: Option<f64> = None;
    let tol = config.tolerance;

    let mut k = 0usize;
    let status = loop {
        let distance = reference.map(|r| (&x - r).norm());
        let clock = Instant::now();
        let (stop, stop_residual) = match config.stop_rule {
            StopRule::RelErrToKnown => {
                let rel = distance.expect("reference checked above") / reference_norm.unwrap();
                (rel <= tol, None)
            }
            StopRule::FeasibilityResidual => {
                // an overflowing |x| must not make every residual acceptable
                let res = residual(subspaces, &x)?;
                let bound = tol * (1.0 + x.norm());
                (bound.is_finite() && res <= bound, Some(res))
            }
            StopRule::StepNorm => (last_step.is_some_and(|s| s <= tol), None),
        };
        elapsed += clock.elapsed();
        let residual_value = match stop_residual {
            Some(r) => Some(r),
            None if config.record_residuals => Some(residual(subspaces, &x)?),
            None => None,
        };
        records.push(IterationRecord {
            iteration: k,
            residual: residual_value,
            distance,
            projections,
            elapsed_s: elapsed.as_secs_f64(),
        });
        if stop {
            break Status::Converged;
        }
        if k >= config.max_iterations {
            break Status::MaxIter;
        }

        let clock = Instant::now();
        let next = match stepper.step(pool, &x, subspaces) {
            Ok(next) => next,
            Err(Error::NonFinite(_)) => return Err(breakdown(config, &records)),
            Err(e) => return Err(e),
        };
        elapsed += clock.elapsed();
        projections += per_step;
        k += 1;
        if !next.iter().all(|v| v.is_finite()) {
            records.push(IterationRecord {
                iteration: k,
                residual: None,
                distance: None,
                projections,
                elapsed_s: elapsed.as_secs_f64(),
            });
            return Err(breakdown(config, &records));
        }
        last_step = Some((&next - &x).norm());
        x = next;
    };

    let rel_err = reference.map(|r| (&x - r).norm() / reference_norm.unwrap());
    Ok(SolveOutcome {
        point: x,
        trace: IterationTrace {
            method: config.method,
            records,
            status,
        },
        rel_err,
    })
}

fn breakdown(config: &SolverConfig, records: &[IterationRecord]) -> Error {
    Error::NumericalBreakdown {
        trace: Box::new(IterationTrace {
            method: config.method,
            records: records.to_vec(),
            status: Status::DivergedNumerically,
        }),
    }
}

/// Empirical linear rate fitted to a distance sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// `exp` of the least-squares slope of `ln d_k` against `k`.
    pub rate: f64,
    /// `rate < 1`.
    pub contracting: bool,
    /// Number of distances used in the fit.
    pub points: usize,
}

/// Fits the linear rate to the recorded distances of `trace`.
pub fn estimate_rate(trace: &IterationTrace) -> Result<RateEstimate> {
    estimate_rate_from_distances(&trace.distances())
}

/// Fits `d_k ≈ C r^k` by least squares on `ln d_k`, using the leading run of
/// positive distances. Needs at least three of them.
pub fn estimate_rate_from_distances(distances: &[f64]) -> Result<RateEstimate> {
    let logs: Vec<f64> = distances
        .iter()
        .take_while(|&&d| d > 0.0 && d.is_finite())
        .map(|d| d.ln())
        .collect();
    let count = logs.len();
    if count < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least 3 positive distances, got {count}"
        )));
    }
    let k_mean = (count - 1) as f64 / 2.0;
    let y_mean = logs.iter().sum::<f64>() / count as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, y) in logs.iter().enumerate() {
        let dk = k as f64 - k_mean;
        num += dk * (y - y_mean);
        den += dk * dk;
    }
    let rate = (num / den).exp();
    Ok(RateEstimate {
        rate,
        contracting: rate < 1.0,
        points: count,
    })
}
