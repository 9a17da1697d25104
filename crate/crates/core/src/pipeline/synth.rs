use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{render_depth, CameraIntrinsics, DepthFrame};
use crate::kinematics::{so3_exp, JacobianMode, JointKind, Pose, RigidTransform, Vec3};
use crate::model::SkinnedModel;

/// Rendered frames with their ground-truth poses and joint positions.
#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub frames: Vec<DepthFrame>,
    pub poses: Vec<Pose>,
    pub joints: Vec<Vec<Vec3>>,
}

/// Renders every pose and adds Gaussian depth noise to the covered pixels.
/// Noisy depths are clamped at zero.
pub fn generate_synthetic(
    model: &SkinnedModel,
    poses: &[Pose],
    intrinsics: &CameraIntrinsics,
    noise_mm: f64,
    seed: u64,
) -> Result<SyntheticSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_mm.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut frames = Vec::with_capacity(poses.len());
    let mut joints = Vec::with_capacity(poses.len());
    for pose in poses {
        let posed = model.pose(pose, JacobianMode::Local)?;
        let mut frame = render_depth(&posed.vertices, &model.mesh.triangles, intrinsics).frame;
        if noise_mm > 0.0 {
            for d in frame.depth.iter_mut().filter(|d| **d > 0.0) {
                *d = (*d + normal.sample(&mut rng)).max(0.0);
            }
        }
        frames.push(frame);
        joints.push(model.joint_positions(pose)?);
    }
    Ok(SyntheticSequence {
        frames,
        poses: poses.to_vec(),
        joints,
    })
}

/// Bounds of a smooth synthetic motion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionParams {
    /// Largest per-frame change of a revolute angle, degrees.
    pub max_angle_step_deg: f64,
    /// Largest per-frame root translation, mm.
    pub max_translation_step: f64,
    /// Largest per-frame root rotation, degrees.
    pub max_rotation_step_deg: f64,
    /// Amplitude of revolute oscillations, degrees.
    pub angle_amplitude_deg: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            max_angle_step_deg: 2.0,
            max_translation_step: 5.0,
            max_rotation_step_deg: 1.0,
            angle_amplitude_deg: 15.0,
        }
    }
}

/// Sinusoidal motion around `initial`, respecting the per-frame bounds and
/// joint limits. Deterministic for a seed.
pub fn synthetic_motion(model: &SkinnedModel, initial: &Pose, frames: usize, params: &MotionParams, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sk = &model.skeleton;
    let n = initial.len();
    // amplitude * omega bounds the per-frame change of a sine.
    let mut amp = vec![0.0; n];
    let mut omega = vec![0.0; n];
    let mut phase = vec![0.0; n];
    for (j, joint) in sk.joints().iter().enumerate() {
        let o = sk.dof_offset(j);
        let (a, step, dofs) = match joint.kind {
            JointKind::Root => (30.0, params.max_translation_step / 3f64.sqrt(), 0..3),
            JointKind::Revolute { .. } => (
                params.angle_amplitude_deg.to_radians(),
                params.max_angle_step_deg.to_radians(),
                0..1,
            ),
        };
        for k in dofs {
            amp[o + k] = a * rng.random_range(0.3..1.0);
            omega[o + k] = 0.9 * step / amp[o + k] * rng.random_range(0.5..1.0);
            phase[o + k] = rng.random_range(0.0..std::f64::consts::TAU);
        }
        if joint.is_root() {
            let a = 10f64.to_radians();
            let step = params.max_rotation_step_deg.to_radians() / 3f64.sqrt();
            for k in 3..6 {
                amp[o + k] = a * rng.random_range(0.3..1.0);
                omega[o + k] = 0.9 * step / amp[o + k] * rng.random_range(0.5..1.0);
                phase[o + k] = rng.random_range(0.0..std::f64::consts::TAU);
            }
        }
    }
    let offset = |i: usize, t: f64| amp[i] * ((omega[i] * t + phase[i]).sin() - phase[i].sin());
    (0..frames)
        .map(|f| {
            let t = f as f64;
            let mut pose = initial.clone();
            for (j, joint) in sk.joints().iter().enumerate() {
                let o = sk.dof_offset(j);
                match joint.kind {
                    JointKind::Root => {
                        let base = initial.root_transform(sk, j);
                        let dt = Vec3::new(offset(o, t), offset(o + 1, t), offset(o + 2, t));
                        let dr = Vec3::new(offset(o + 3, t), offset(o + 4, t), offset(o + 5, t));
                        let rot = so3_exp(&dr) * base.rotation;
                        let tr = RigidTransform::new(rot, base.translation + dt);
                        pose.set_root_transform(sk, j, &tr);
                    }
                    JointKind::Revolute { lower, upper, .. } => {
                        let v = (initial.theta[o] + offset(o, t)).clamp(lower, upper);
                        pose.theta[o] = v;
                    }
                }
            }
            pose
        })
        .collect()
}
