//! Circumcentered reflection (CRM, P-CRM) and simultaneous projection
//! (F-SPM, Cimmino) solvers for the best approximation problem over an
//! intersection of affine subspaces.
//!
//! ```
//! use pcrm::{build_instance, solve, Method, SolverConfig};
//!
//! let instance = build_instance(60, 20, 0.1, 7).unwrap();
//! let outcome = solve(&instance, &SolverConfig::new(Method::Pcrm)).unwrap();
//! assert!(outcome.trace.converged());
//! assert!(outcome.rel_err.unwrap() <= 1e-5);
//! ```

pub mod affine;
pub mod analysis;
pub mod bench;
pub mod circumcenter;
pub mod error;
pub mod linalg;
pub mod parallel;
pub mod problem;
pub mod solver;

pub use affine::{intersection, project_intersection, residual, AffineSubspace, Point};
pub use analysis::{
    angle_report, direction_basis, error_bound_constant, estimate_regularity, friedrichs_cosine,
    AngleReport,
};
pub use bench::{BenchConfig, BenchRecord};
pub use circumcenter::{circumcenter, gram_system, CircumcenterSystem};
pub use error::{Error, Result};
pub use parallel::WorkerPool;
pub use problem::{
    build_instance, build_underdetermined_instance, from_descriptor, gaussian_matrix,
    GenerationDescriptor, ProblemInstance,
};
pub use solver::{
    crm_step, estimate_rate, fspm_step, pcrm_step, solve, solve_from, IterationTrace, Method,
    SolveOutcome, SolverConfig, Status, StopRule, Weights,
};
