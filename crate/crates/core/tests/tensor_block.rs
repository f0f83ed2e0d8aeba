mod common;

use common::oracles::laminate_dense;
use common::*;
use dmn_core::block::{
    dehomogenize_finite, homogenize_finite, homogenize_linear, rotate_finite, rotate_linear,
};
use dmn_core::tensor::{
    isotropic_stiffness, mandel_from_vec9, mandel_rotation, mat3_from_vec9, rot6_x, rot6_y, rot6_z,
    rotation3, rotation6, rotation6_derivatives, rotation9, vec9_from_mat3, EulerAngles, Mat3,
    Mat6, Mat9, Vec9,
};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

fn random_angles(rng: &mut ChaCha8Rng) -> EulerAngles {
    EulerAngles::new(
        rng.random_range(-3.2..3.2),
        rng.random_range(-1.6..1.6),
        rng.random_range(-3.2..3.2),
    )
}

fn ortho() -> Mat6 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    random_phase_pair(&mut rng).1
}

/// A symmetric, positive-definite 9×9 tangent built from a stiffness plus a
/// rotational penalty.
fn tangent9(rng: &mut ChaCha8Rng) -> Mat9 {
    let (c, _) = random_phase_pair(rng);
    let b = dmn_core::tensor::sym_embedding();
    let skew = Mat9::from_fn(|i, j| if i == j { 0.3 } else { 0.0 });
    b * c * b.transpose() + skew
}

fn min_eig(m: &Mat6) -> f64 {
    SymmetricEigen::new((m + m.transpose()) * 0.5)
        .eigenvalues
        .min()
}

#[test]
fn quarter_turn_about_axis3_swaps_entries() {
    let c = ortho();
    let a = EulerAngles::new(0.0, 0.0, FRAC_PI_2);
    let r = rotate_linear(&c, &a);
    let oracle = rotate_tensor4(&c, &rotation3(&a));
    assert!(rel(&r, &oracle) < 1e-12);
    assert!((r[(0, 0)] - c[(1, 1)]).abs() < 1e-10 * c.amax());
    assert!((r[(1, 1)] - c[(0, 0)]).abs() < 1e-10 * c.amax());
    assert!((r[(3, 3)] - c[(4, 4)]).abs() < 1e-10 * c.amax());
    assert!((r[(4, 4)] - c[(3, 3)]).abs() < 1e-10 * c.amax());
}

#[test]
fn rotation_matches_tensor_oracle_for_random_angles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (c, _) = random_phase_pair(&mut rng);
        let a = random_angles(&mut rng);
        let oracle = rotate_tensor4(&c, &rotation3(&a));
        assert!(rel(&rotate_linear(&c, &a), &oracle) < 1e-12);
    }
}

#[test]
fn vec9_rotation_agrees_with_mandel_rotation_on_symmetric_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let a = random_angles(&mut rng);
        let m = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let v = vec9_from_mat3(&(m + m.transpose()));
        let lhs = mandel_from_vec9(&(rotation9(&a) * v));
        let rhs = rotation6(&a) * mandel_from_vec9(&v);
        assert!((lhs - rhs).amax() < 1e-12);
    }
}

#[test]
fn identity_gradient_is_rotation_invariant() {
    let id = vec9_from_mat3(&Mat3::identity());
    for alpha in [0.3, -1.2, 2.9] {
        assert!((rotation9(&EulerAngles::new(alpha, 0.0, 0.0)) * id - id).amax() < 1e-15);
    }
}

#[test]
fn rotation_derivatives_match_finite_differences() {
    let h = 1e-6;
    for a in [
        EulerAngles::ZERO,
        EulerAngles::new(FRAC_PI_4, FRAC_PI_4, FRAC_PI_4),
        EulerAngles::new(0.4, -0.9, 2.0),
    ] {
        let (dx, dy, dz) = rotation6_derivatives(&a);
        let fd = |f: fn(f64) -> Mat6, t: f64| (f(t + h) - f(t - h)) / (2.0 * h);
        assert!((dx - fd(rot6_x, a.alpha)).amax() < 1e-8);
        assert!((dy - fd(rot6_y, a.beta)).amax() < 1e-8);
        assert!((dz - fd(rot6_z, a.gamma)).amax() < 1e-8);
    }
    let (dx, dy, dz) = rotation6_derivatives(&EulerAngles::ZERO);
    for d in [dx, dy, dz] {
        assert!(d.diagonal().amax() < 1e-15);
    }
}

#[test]
fn identical_phases_reproduce_the_phase() {
    let c = ortho();
    for (w1, w2) in [(0.3, 0.9), (1.0, 1.0), (2.0, 0.1)] {
        assert!(rel(&homogenize_linear(&c, &c, w1, w2).unwrap().c, &c) < 1e-13);
    }
}

#[test]
fn vanished_phase_returns_the_other() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (c1, c2) = random_phase_pair(&mut rng);
    assert_eq!(homogenize_linear(&c1, &c2, 1.0, 0.0).unwrap().c, c1);
    assert_eq!(homogenize_linear(&c1, &c2, 0.0, 1.0).unwrap().c, c2);
}

#[test]
fn isotropic_contrast_pair_matches_dense_laminate() {
    let c1 = isotropic_stiffness(1.0, 0.3);
    let c2 = isotropic_stiffness(10.0, 0.3);
    let blk = homogenize_linear(&c1, &c2, 0.5, 0.5).unwrap().c;
    assert!(rel(&blk, &laminate_dense(&c1, &c2, 0.5)) < 1e-10);
}

#[test]
fn isotropic_stiffness_is_rotation_invariant() {
    let c = isotropic_stiffness(7.0, 0.22);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        assert!(rel(&rotate_linear(&c, &random_angles(&mut rng)), &c) < 1e-12);
    }
}

#[test]
fn finite_block_with_equal_tangents_averages_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = tangent9(&mut rng);
    let d1 = Vec9::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let d2 = Vec9::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let b = homogenize_finite(&a, &a, &d1, &d2, 0.3, 0.7).unwrap();
    let f1 = 0.3;
    assert!((b.dp - (d1 * f1 + d2 * (1.0 - f1))).amax() < 1e-12);
}

#[test]
fn rotated_residual_keeps_its_norm_and_tangent_its_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = tangent9(&mut rng);
    let dp = Vec9::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let ang = random_angles(&mut rng);
    let (ar, dr) = rotate_finite(&a, &dp, &ang);
    assert!((dr.norm() - dp.norm()).abs() < 1e-13);
    assert!((ar - ar.transpose()).amax() < 1e-12 * a.amax());
    // same rotation applied to the 3×3 stress
    let q = rotation3(&ang);
    let oracle = vec9_from_mat3(&(q.transpose() * mat3_from_vec9(&dp) * q));
    assert!((dr - oracle).amax() < 1e-12);
}

#[test]
fn dehomogenized_increments_satisfy_interface_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let interface = [2usize, 3, 5];
    for _ in 0..10 {
        let a1 = tangent9(&mut rng);
        let a2 = tangent9(&mut rng) * 5.0;
        let d1 = Vec9::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let d2 = Vec9::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let f1 = rng.random_range(0.1..0.9);
        let b = homogenize_finite(&a1, &a2, &d1, &d2, f1, 1.0 - f1).unwrap();
        for df in [
            Vec9::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            Vec9::zeros(),
        ] {
            let (df1, df2) = dehomogenize_finite(&b, &d1, &d2, &df);
            let (p1, p2) = (a1 * df1 + d1, a2 * df2 + d2);
            let scale = p1.amax().max(p2.amax()).max(1.0);
            for i in 0..9 {
                if interface.contains(&i) {
                    assert!((p1[i] - p2[i]).abs() < 1e-10 * scale, "traction {i}");
                } else {
                    assert!(
                        (df1[i] - df2[i]).abs() < 1e-10 * (1.0 + df.amax()),
                        "kinematics {i}"
                    );
                }
            }
            // averaging and the homogenized response
            assert!((df1 * f1 + df2 * (1.0 - f1) - df).amax() < 1e-12);
            let avg = p1 * f1 + p2 * (1.0 - f1);
            assert!((avg - (b.a * df + b.dp)).amax() < 1e-10 * scale);
        }
    }
}

#[test]
fn identical_phases_without_jump_split_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = tangent9(&mut rng);
    let d = Vec9::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let b = homogenize_finite(&a, &a, &d, &d, 0.4, 0.6).unwrap();
    let df = Vec9::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let (df1, df2) = dehomogenize_finite(&b, &d, &d, &df);
    assert!((df1 - df).amax() < 1e-12 && (df2 - df).amax() < 1e-12);
}

fn pair_from_seed(seed: u64) -> (Mat6, Mat6, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c1, c2) = random_phase_pair(&mut rng);
    let a1 = random_angles(&mut rng);
    let a2 = random_angles(&mut rng);
    (
        rotate_linear(&c1, &a1),
        rotate_linear(&c2, &a2),
        rng.random_range(0.05..2.0),
        rng.random_range(0.05..2.0),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_is_orthogonal_and_a_homomorphism(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_angles(&mut rng), random_angles(&mut rng));
        let r = rotation6(&a);
        prop_assert!((r.transpose() * r - Mat6::identity()).amax() < 1e-12);
        let r9 = rotation9(&a);
        prop_assert!((r9.transpose() * r9 - Mat9::identity()).amax() < 1e-12);
        let (qa, qb) = (rotation3(&a), rotation3(&b));
        prop_assert!((mandel_rotation(&(qa * qb)) - mandel_rotation(&qa) * mandel_rotation(&qb)).amax() < 1e-12);
        prop_assert!((rotation6(&a) - mandel_rotation(&qa)).amax() < 1e-12);
    }

    #[test]
    fn congruence_keeps_symmetry_and_spectrum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, _) = random_phase_pair(&mut rng);
        let cr = rotate_linear(&c, &random_angles(&mut rng));
        prop_assert!((cr - cr.transpose()).amax() < 1e-12 * c.amax());
        let mut e0: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
        let mut e1: Vec<f64> = SymmetricEigen::new(cr).eigenvalues.iter().copied().collect();
        e0.sort_by(f64::total_cmp);
        e1.sort_by(f64::total_cmp);
        for (x, y) in e0.iter().zip(&e1) {
            prop_assert!((x - y).abs() < 1e-10 * c.amax());
        }
    }

    #[test]
    fn laminate_lies_between_reuss_and_voigt(seed in any::<u64>()) {
        let (c1, c2, w1, w2) = pair_from_seed(seed);
        let (f1, f2) = (w1 / (w1 + w2), w2 / (w1 + w2));
        let c = homogenize_linear(&c1, &c2, w1, w2).unwrap().c;
        let voigt = c1 * f1 + c2 * f2;
        let reuss = (c1.try_inverse().unwrap() * f1 + c2.try_inverse().unwrap() * f2).try_inverse().unwrap();
        let tol = 1e-9 * voigt.norm();
        prop_assert!(min_eig(&(voigt - c)) > -tol);
        prop_assert!(min_eig(&(c - reuss)) > -tol);
    }

    #[test]
    fn phase_swap_is_symmetric(seed in any::<u64>()) {
        let (c1, c2, w1, w2) = pair_from_seed(seed);
        let a = homogenize_linear(&c1, &c2, w1, w2).unwrap().c;
        let b = homogenize_linear(&c2, &c1, w2, w1).unwrap().c;
        prop_assert!(rel(&a, &b) < 1e-10);
    }

    #[test]
    fn phase_energies_add_up(seed in any::<u64>()) {
        let (c1, c2, w1, w2) = pair_from_seed(seed);
        let sol = homogenize_linear(&c1, &c2, w1, w2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let e = dmn_core::tensor::Vec6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let (e1, e2) = (sol.s1 * e, sol.s2() * e);
        let parts = sol.f1 * e1.dot(&(c1 * e1)) + sol.f2 * e2.dot(&(c2 * e2));
        let total = e.dot(&(sol.c * e));
        prop_assert!((parts - total).abs() <= 1e-9 * total.abs());
    }

    #[test]
    fn block_matches_dense_oracle(seed in any::<u64>()) {
        let (c1, c2, w1, w2) = pair_from_seed(seed);
        let blk = homogenize_linear(&c1, &c2, w1, w2).unwrap().c;
        prop_assert!(rel(&blk, &laminate_dense(&c1, &c2, w1 / (w1 + w2))) < 1e-10);
    }
}
