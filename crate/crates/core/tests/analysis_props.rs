mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use pcrm::analysis::estimate_regularity_on;
use pcrm::analysis::verify_two_set_bound;
use pcrm::problem::{build_planted_instance, NormalStream};
use pcrm::{
    angle_report, direction_basis, error_bound_constant, estimate_regularity, friedrichs_cosine,
    AffineSubspace, ProblemInstance, WorkerPool,
};

fn rotate(u: &AffineSubspace, q: &DMatrix<f64>, shift: &DVector<f64>) -> AffineSubspace {
    // Q U + t = { y : A Qᵀ y = b + A Qᵀ t }
    let a = u.constraint_matrix() * q.transpose();
    let b = u.rhs() + &a * shift;
    AffineSubspace::new(a, b).unwrap()
}

fn random_pair(stream: &mut NormalStream, seed: u64) -> (AffineSubspace, AffineSubspace) {
    let n = uniform_int(stream, 2, 8);
    let r1 = uniform_int(stream, 1, n - 1);
    let r2 = uniform_int(stream, 1, n - 1);
    let inst = build_planted_instance(n, &[r1, r2], 0.0, seed).unwrap();
    (inst.subspaces()[0].clone(), inst.subspaces()[1].clone())
}

#[test]
fn direction_basis_is_orthonormal_null_space() {
    let inst = build_planted_instance(7, &[3], 0.3, 8).unwrap();
    let u = &inst.subspaces()[0];
    let basis = direction_basis(u);
    assert_eq!(basis.ncols(), 4);
    assert!((u.constraint_matrix() * &basis).norm() <= 1e-12 * u.constraint_matrix().norm());
    assert!((basis.tr_mul(&basis) - DMatrix::identity(4, 4)).norm() <= 1e-12);
}

#[test]
fn friedrichs_cosine_is_symmetric_and_rotation_invariant() {
    let mut stream = NormalStream::new(51);
    for seed in 0..40 {
        let (u, v) = random_pair(&mut stream, seed);
        let c_uv = friedrichs_cosine(&u, &v).unwrap();
        let c_vu = friedrichs_cosine(&v, &u).unwrap();
        assert!((0.0..1.0).contains(&c_uv));
        assert!((c_uv - c_vu).abs() <= 1e-12);

        let n = u.ambient_dim();
        let q = random_orthogonal(n, &mut stream);
        let t = stream.normal_vector(n);
        let c_rot = friedrichs_cosine(&rotate(&u, &q, &t), &rotate(&v, &q, &t)).unwrap();
        assert!((c_rot - c_uv).abs() <= 1e-10, "{c_rot} vs {c_uv}");
    }
}

#[test]
fn bound_holds_on_random_pairs() {
    let mut stream = NormalStream::new(52);
    for seed in 0..20 {
        let (u, v) = random_pair(&mut stream, seed);
        let check = verify_two_set_bound(&u, &v, 1000, seed, 1e-9).unwrap();
        assert!(check.passed, "seed {seed}: {check:?}");
        assert!(check.bound >= 5f64.sqrt() - 1e-12);
        let r = error_bound_constant(&u, &v).unwrap();
        assert_eq!(r, check.bound);
    }
}

#[test]
fn nested_subspaces_are_fully_deflated() {
    // V ⊂ U: the only principal cosines are 1, so c_F = 0
    let u = AffineSubspace::from_rows(&[&[0.0, 0.0, 1.0]], &[0.0]).unwrap();
    let v = AffineSubspace::from_rows(&[&[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0]], &[0.0, 0.0]).unwrap();
    let report = angle_report(&u, &v).unwrap();
    assert_eq!(report.intersection_dim, 1);
    assert_eq!(report.friedrichs_cosine, 0.0);
}

#[test]
fn regularity_is_at_least_one_and_pool_independent() {
    let mut stream = NormalStream::new(53);
    for seed in 0..10 {
        let n = uniform_int(&mut stream, 3, 10);
        let inst: ProblemInstance = random_planted(&mut stream, n, 3, (1, n - 1), seed);
        let seq = estimate_regularity(&inst, 300, seed).unwrap();
        assert!(seq >= 1.0 - 1e-9, "{seq}");
        let pooled =
            estimate_regularity_on(&WorkerPool::new(3).unwrap(), &inst, 300, seed).unwrap();
        assert_eq!(seq.to_bits(), pooled.to_bits());
    }
}
