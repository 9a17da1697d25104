#![allow(dead_code)]

use hoitrack::collision::Repulsion;
use hoitrack::data_terms::{Metric, PointCorrespondence};
use hoitrack::geometry::{render_depth, CameraIntrinsics};
use hoitrack::kinematics::{so3_exp, JacobianMode, JointKind, Pose, RigidTransform, Vec3};
use hoitrack::model::SkinnedModel;
use hoitrack::solver::{assemble, build_correspondences, CorrespondenceSets, EnergyWeights, FrameInput, PreparedFrame, Term, TrackerConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hand about `distance` mm in front of the camera, palm toward it.
pub fn hand_pose(model: &SkinnedModel, distance: f64) -> Pose {
    let mut p = Pose::zeros(&model.skeleton);
    p.theta[2] = distance;
    p
}

/// Revolute angles drawn inside their limits (shrunk by `margin` of the
/// range) and a root jittered around `distance` mm.
pub fn random_pose(model: &SkinnedModel, r: &mut impl Rng, distance: f64, margin: f64) -> Pose {
    let sk = &model.skeleton;
    let mut p = Pose::zeros(sk);
    for (j, joint) in sk.joints().iter().enumerate() {
        let o = sk.dof_offset(j);
        match joint.kind {
            JointKind::Root => {
                let t = Vec3::new(r.random_range(-20.0..20.0), r.random_range(-20.0..20.0), distance + r.random_range(-20.0..20.0));
                let phi = Vec3::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), r.random_range(-0.3..0.3));
                p.set_root_transform(sk, j, &RigidTransform::new(so3_exp(&phi), t));
            }
            JointKind::Revolute { lower, upper, .. } => {
                let m = (upper - lower) * margin;
                p.theta[o] = r.random_range(lower + m..upper - m);
            }
        }
    }
    p
}

/// `pose` moved by up to 3 mm, 0.03 rad at the root and 0.05 rad per joint.
pub fn nearby(model: &SkinnedModel, pose: &Pose, r: &mut impl Rng) -> Pose {
    let sk = &model.skeleton;
    let mut d = DVector::zeros(pose.len());
    for (j, joint) in sk.joints().iter().enumerate() {
        let o = sk.dof_offset(j);
        if joint.is_root() {
            for k in 0..3 {
                d[o + k] = r.random_range(-3.0..3.0);
                d[o + 3 + k] = r.random_range(-0.03..0.03);
            }
        } else {
            d[o] = r.random_range(-0.05..0.05);
        }
    }
    pose.retract(sk, &d)
}

fn offset(r: &mut impl Rng) -> Vec3 {
    Vec3::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0))
}

/// Correspondences of every kind at `pose`: the data sets come from a frame
/// rendered at `observed`, the others are random targets near the surface.
pub fn mixed_sets(model: &SkinnedModel, pose: &Pose, observed: &Pose, metric: Metric, r: &mut impl Rng) -> CorrespondenceSets {
    let k = CameraIntrinsics::vga();
    let truth = model.pose(observed, JacobianMode::Local).unwrap();
    let frame = render_depth(&truth.vertices, &model.mesh.triangles, &k).frame;
    let mut config = TrackerConfig {
        metric,
        ..TrackerConfig::default()
    };
    config.weights.gamma_c = 0.0;
    config.weights.gamma_s = 0.0;
    config.weights.gamma_ph = 0.0;
    let prepared = PreparedFrame::new(&frame, &config);
    let posed = model.pose(pose, JacobianMode::Local).unwrap();
    let rendering = render_depth(&posed.vertices, &model.mesh.triangles, &k);
    let input = FrameInput { frame: &prepared, detections: &[] };
    let (mut sets, _) = build_correspondences(model, &posed, &rendering, &input, &config).unwrap();
    let n = model.mesh.vertices.len();
    for _ in 0..20 {
        let v = r.random_range(0..n);
        let normal = posed.normals[v];
        let psi = r.random_range(0.0..2.0);
        sets.collision.push(Repulsion {
            vertex: v,
            face: 0,
            psi,
            normal,
            target: posed.vertices[v] - psi * normal,
        });
    }
    for _ in 0..5 {
        let v = r.random_range(0..n);
        sets.salient.push(PointCorrespondence {
            vertex: v,
            target: posed.vertices[v] + offset(r),
            target_normal: posed.normals[v],
            metric: Metric::PointToPoint,
        });
    }
    for m in [Metric::PointToPoint, Metric::PointToPlane] {
        for _ in 0..4 {
            let v = r.random_range(0..n);
            let tn = (posed.normals[v] + 0.3 * offset(r) / 3.0).normalize();
            sets.physics.push(PointCorrespondence {
                vertex: v,
                target: posed.vertices[v] + offset(r),
                target_normal: tn,
                metric: m,
            });
        }
    }
    sets
}

/// Relative Frobenius error between the assembled Jacobian and central
/// differences along `Pose::retract`, per term.
pub fn jacobian_errors(model: &SkinnedModel, pose: &Pose, previous: &Pose, sets: &CorrespondenceSets, weights: &EnergyWeights) -> Vec<(Term, f64)> {
    let dof = model.dof_count();
    let sys = assemble(model, pose, previous, sets, weights).unwrap();
    let analytic = sys.dense_jacobian(dof);
    let mut numeric = DMatrix::zeros(sys.rows(), dof);
    let h = 1e-6;
    for c in 0..dof {
        let mut d = DVector::zeros(dof);
        d[c] = h;
        let plus = assemble(model, &pose.retract(&model.skeleton, &d), previous, sets, weights).unwrap();
        let minus = assemble(model, &pose.retract(&model.skeleton, &(-d)), previous, sets, weights).unwrap();
        assert_eq!(plus.rows(), sys.rows());
        for r in 0..sys.rows() {
            numeric[(r, c)] = (plus.residuals[r] - minus.residuals[r]) / (2.0 * h);
        }
    }
    sys.spans()
        .iter()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(term, rows)| {
            let a = analytic.rows(rows.start, rows.len());
            let n = numeric.rows(rows.start, rows.len());
            (*term, (a - n).norm() / a.norm().max(1e-12))
        })
        .collect()
}
