mod common;

use hoitrack::kinematics::{exp_twist, so3_exp, so3_log, JacobianMode, RigidTransform, Twist, Vec3};
use hoitrack::pipeline::procedural_hand;
use proptest::prelude::*;

fn unit(v: [f64; 3]) -> Option<Vec3> {
    let v = Vec3::from(v);
    (v.norm() > 1e-3).then(|| v.normalize())
}

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0..1.0f64)
}

proptest! {
    #[test]
    fn twist_inverse_is_negated_angle(axis in vec3(), point in prop::array::uniform3(-100.0..100.0f64), theta in -6.0..6.0f64) {
        prop_assume!(unit(axis).is_some());
        let t = Twist::revolute(unit(axis).unwrap(), point.into(), theta).unwrap();
        let id = exp_twist(&t).unwrap().compose(&exp_twist(&t.negated()).unwrap());
        prop_assert!(id.max_abs_diff(&RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn same_axis_angles_add(axis in vec3(), point in prop::array::uniform3(-100.0..100.0f64), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        prop_assume!(unit(axis).is_some());
        let n = unit(axis).unwrap();
        let ta = exp_twist(&Twist::revolute(n, point.into(), a).unwrap()).unwrap();
        let tb = exp_twist(&Twist::revolute(n, point.into(), b).unwrap()).unwrap();
        let tab = exp_twist(&Twist::revolute(n, point.into(), a + b).unwrap()).unwrap();
        prop_assert!(ta.compose(&tb).max_abs_diff(&tab) < 1e-9);
    }

    #[test]
    fn prismatic_twist_translates(dir in vec3(), d in -50.0..50.0f64) {
        prop_assume!(unit(dir).is_some());
        let n = unit(dir).unwrap();
        let t = exp_twist(&Twist::translation(n, d)).unwrap();
        prop_assert!(t.max_abs_diff(&RigidTransform::from_translation(n * d)) < 1e-12);
    }

    #[test]
    fn so3_log_inverts_exp(phi in prop::array::uniform3(-1.8..1.8f64)) {
        let phi = Vec3::from(phi);
        prop_assume!(phi.norm() < std::f64::consts::PI - 1e-3);
        let back = so3_log(&so3_exp(&phi));
        prop_assert!((back - phi).norm() < 1e-9);
        prop_assert!(RigidTransform::new(so3_exp(&phi), Vec3::zeros()).is_proper_rotation(1e-12));
    }

    #[test]
    fn skinning_follows_a_rigid_root_motion(seed in any::<u64>(), phi in prop::array::uniform3(-1.0..1.0f64), t in prop::array::uniform3(-200.0..200.0f64)) {
        let hand = procedural_hand(3).unwrap();
        let mut r = common::rng(seed);
        let pose = common::random_pose(&hand, &mut r, 500.0, 0.0);
        let g = RigidTransform::new(so3_exp(&phi.into()), t.into());
        let mut moved = pose.clone();
        let root = pose.root_transform(&hand.skeleton, 0);
        moved.set_root_transform(&hand.skeleton, 0, &g.compose(&root));
        let a = hand.pose(&pose, JacobianMode::Local).unwrap();
        let b = hand.pose(&moved, JacobianMode::Local).unwrap();
        for (p, q) in a.vertices.iter().zip(&b.vertices) {
            prop_assert!((g.transform_point(p) - q).norm() < 1e-9);
        }
        for (n, m) in a.normals.iter().zip(&b.normals) {
            prop_assert!((g.transform_vector(n) - m).norm() < 1e-9);
        }
    }
}

#[test]
fn zero_twist_is_identity() {
    for t in [Twist::revolute(Vec3::z(), Vec3::new(3.0, 4.0, 5.0), 0.0).unwrap(), Twist::translation(Vec3::x(), 0.0)] {
        assert!(exp_twist(&t).unwrap().max_abs_diff(&RigidTransform::identity()) < 1e-15);
    }
}
