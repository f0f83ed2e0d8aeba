mod common;

use common::oracles::laminate_dense;
use common::*;
use dmn_core::network::{CompressOptions, MaterialNetwork, TreemapNode};
use dmn_core::tensor::{isotropic_stiffness, EulerAngles, Mat6};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn phases(seed: u64) -> (Mat6, Mat6) {
    random_phase_pair(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn output(net: &MaterialNetwork, c: &(Mat6, Mat6)) -> Mat6 {
    net.forward_linear(&c.0, Some(&c.1)).unwrap().output
}

#[test]
fn vf1_counts_only_active_phase_one_weight() {
    let mut net = MaterialNetwork::new(3);
    net.z = vec![1.0, -1.0, 1.0, 1.0];
    let w = net.weights().unwrap();
    assert!((w.vf1 - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(net.active_leaves(), 3);
}

#[test]
fn node_weights_sum_children() {
    let net = MaterialNetwork::random_seeded(6, 11);
    let w = net.weights().unwrap();
    for n in 1..net.first_leaf() {
        assert!((w.node[n] - w.node[2 * n] - w.node[2 * n + 1]).abs() < 1e-14);
    }
    let leaves: f64 = net.z.iter().map(|&z| z.max(0.0)).sum();
    assert!((w.total() - leaves).abs() < 1e-13);
}

#[test]
fn all_leaves_off_is_an_error() {
    let mut net = MaterialNetwork::new(3);
    net.z = vec![-1.0; 4];
    assert!(net.weights().is_err());
    assert!(net.forward_linear(&Mat6::identity(), None).is_err());
}

#[test]
fn depth_two_zero_angles_is_a_laminate() {
    let c = phases(2);
    let mut net = MaterialNetwork::new(2);
    net.z = vec![0.3, 0.9];
    let expect = laminate_dense(&c.0, &c.1, 0.25);
    assert!(rel(&output(&net, &c), &expect) < 1e-12);
}

#[test]
fn single_active_leaf_is_its_composed_rotation() {
    let c = phases(3);
    let mut net = MaterialNetwork::random_seeded(4, 7);
    for (j, z) in net.z.iter_mut().enumerate() {
        *z = if j == 5 { 0.6 } else { -0.2 };
    }
    let out = output(&net, &c);
    let o = net.export_orientations().unwrap();
    assert_eq!(o.len(), 1);
    let leaf = if net.phases[5] == 1 { &c.0 } else { &c.1 };
    assert!(rel(&out, &rotate_tensor4(leaf, &o[0].matrix())) < 1e-11);
    assert!((o[0].fraction - 1.0).abs() < 1e-15);
}

#[test]
fn exported_rotations_are_proper() {
    let net = MaterialNetwork::random_seeded(5, 4);
    for o in net.export_orientations().unwrap() {
        let q = o.matrix();
        assert!((q.transpose() * q - nalgebra::Matrix3::identity()).amax() < 1e-12);
        assert!((q.determinant() - 1.0).abs() < 1e-12);
        let r = o.angles.rotation3();
        assert!((r - q).amax() < 1e-10);
    }
}

fn leaf_fractions(n: &TreemapNode) -> f64 {
    n.leaves().iter().map(|l| l.fraction).sum()
}

#[test]
fn treemap_fractions_partition_unity() {
    let mut net = MaterialNetwork::random_seeded(5, 9);
    net.z[3] = -1.0;
    net.z[10] = -1.0;
    let t = net.export_treemap().unwrap();
    assert_eq!(t.root.leaves().len(), net.active_leaves());
    assert!((leaf_fractions(&t.root) - 1.0).abs() < 1e-13);
    fn check(n: &TreemapNode) {
        if !n.children.is_empty() {
            let s: f64 = n.children.iter().map(|c| c.weight).sum();
            assert!((s - n.weight).abs() < 1e-13);
            n.children.iter().for_each(check);
        }
    }
    check(&t.root);
    let phase1: f64 = t
        .root
        .leaves()
        .iter()
        .filter(|l| l.phase == Some(1))
        .map(|l| l.fraction)
        .sum();
    assert!((phase1 - t.vf1).abs() < 1e-13);
}

#[test]
fn collapse_of_single_child_keeps_output() {
    let c = phases(5);
    let mut net = MaterialNetwork::random_seeded(5, 12);
    for j in [1, 2, 3, 8, 9, 14] {
        net.z[j] = -0.3;
    }
    let before = output(&net, &c);
    let active = net.active_leaves();
    let r = net.compress(&CompressOptions::default()).unwrap();
    assert!(r.collapsed > 0);
    assert_eq!(r.active_after, active);
    assert!(rel(&output(&net, &c), &before) < 1e-11);
    // idempotent
    let again = net.compress(&CompressOptions::default()).unwrap();
    assert_eq!((again.merged, again.collapsed), (0, 0));
    assert!(rel(&output(&net, &c), &before) < 1e-11);
}

#[test]
fn identical_sibling_subtrees_merge() {
    let c = phases(6);
    let mut net = MaterialNetwork::random_seeded(4, 13);
    // make subtree 3 a copy of subtree 2
    for (a, b) in [(2, 3), (4, 6), (5, 7), (8, 12), (9, 13), (10, 14), (11, 15)] {
        net.angles[b - 1] = net.angles[a - 1];
    }
    for j in 0..4 {
        net.z[4 + j] = net.z[j];
    }
    let before = output(&net, &c);
    let total = net.weights().unwrap().total();
    let r = net
        .compress_with_probe(&CompressOptions::default(), &[(c.0, Some(c.1))])
        .unwrap();
    assert_eq!(r.merged, 1);
    assert_eq!((r.active_before, r.active_after), (8, 4));
    assert!(r.output_delta.unwrap() < 1e-11);
    assert!(rel(&output(&net, &c), &before) < 1e-11);
    assert!((net.weights().unwrap().total() - total).abs() < 1e-12);
    assert!(net.z[4..].iter().all(|&z| z <= 0.0));
}

#[test]
fn dissimilar_siblings_are_kept() {
    let mut net = MaterialNetwork::random_seeded(4, 14);
    net.angles[2] = EulerAngles::new(1.0, 0.4, -0.7);
    net.angles[1] = EulerAngles::ZERO;
    let r = net.compress(&CompressOptions::default()).unwrap();
    assert_eq!(r.active_after, 8);
}

#[test]
fn isotropic_phases_ignore_rotations() {
    let c = (isotropic_stiffness(1.0, 0.3), isotropic_stiffness(7.0, 0.2));
    let a = MaterialNetwork::random_seeded(3, 1);
    let mut b = a.clone();
    b.angles.iter_mut().for_each(|x| *x = EulerAngles::ZERO);
    // only leaf rotations are irrelevant for isotropic phases
    let first = a.first_leaf();
    for n in 1..first {
        b.angles[n - 1] = a.angles[n - 1];
    }
    assert!(rel(&output(&a, &c), &output(&b, &c)) < 1e-12);
}

#[test]
fn output_is_symmetric_positive_definite() {
    let c = phases(8);
    let out = output(&MaterialNetwork::random_seeded(6, 2), &c);
    assert!((out - out.transpose()).amax() < 1e-10 * out.amax());
    assert!(out.symmetric_eigenvalues().min() > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sibling_swap_leaves_output_unchanged(seed in 0u64..1000, level in 1usize..4) {
        let c = phases(seed + 100);
        let mut net = MaterialNetwork::random_seeded(4, seed);
        let before = output(&net, &c);
        let n = 1usize << level;
        net.swap_subtrees(n, n + 1);
        prop_assert!(rel(&output(&net, &c), &before) < 1e-10);
    }

    #[test]
    fn uniform_scaling_of_activations_is_invisible(seed in 0u64..1000, k in 0.1f64..10.0) {
        let c = phases(seed + 7);
        let mut net = MaterialNetwork::random_seeded(4, seed);
        let before = output(&net, &c);
        let vf = net.weights().unwrap().vf1;
        net.z.iter_mut().for_each(|z| *z *= k);
        prop_assert!(rel(&output(&net, &c), &before) < 1e-11);
        prop_assert!((net.weights().unwrap().vf1 - vf).abs() < 1e-13);
    }

    #[test]
    fn stiffness_is_homogeneous_of_degree_one(seed in 0u64..1000, k in 1e-3f64..1e3) {
        let c = phases(seed);
        let net = MaterialNetwork::random_seeded(3, seed);
        let a = output(&net, &(c.0 * k, c.1 * k));
        prop_assert!(rel(&a, &(output(&net, &c) * k)) < 1e-10);
    }
}
