//! Damped Gauss-Newton minimization of the stacked tracking objective.
//!
//! Each outer iteration fixes the correspondence sets, stacks every term as
//! `sqrt(gamma)`-scaled residual rows and takes one Levenberg-damped step.

mod system;
mod tracker;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collision::Repulsion;
use crate::data_terms::{push_correspondence, push_line_rows, push_plane_row, push_point_rows, LineCorrespondence, Metric, PointCorrespondence};
use crate::error::{Error, Result};
use crate::kinematics::{JacobianMode, JointKind, Pose, Skeleton};
use crate::model::{PosedModel, SkinnedModel};

pub use system::{ResidualSystem, Term};
pub use tracker::{build_correspondences, track_frame, track_sequence, FrameInput, FrameResult, PreparedFrame, SolveReport, Stopping, TrackerConfig};

/// Term weights of the objective. Anatomy and regularization weights scale
/// with the number of correspondences of the current iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyWeights {
    pub m2d: f64,
    pub d2m: f64,
    pub gamma_c: f64,
    pub gamma_s: f64,
    pub gamma_ph: f64,
    /// `gamma_a = anatomy_factor * C_all`
    pub anatomy_factor: f64,
    /// `gamma_r = regularization_factor * C_all`
    pub regularization_factor: f64,
    /// Assignment outlier cost.
    pub lambda: f64,
    /// Sharpness `p` of the joint-limit barrier.
    pub limit_sharpness: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            m2d: 1.0,
            d2m: 1.0,
            gamma_c: 10.0,
            gamma_s: 1.0,
            gamma_ph: 10.0,
            anatomy_factor: 0.0015,
            regularization_factor: 0.02,
            lambda: 1.2,
            limit_sharpness: 10.0,
        }
    }
}

impl EnergyWeights {
    pub fn gamma_a(&self, c_all: usize) -> f64 {
        self.anatomy_factor * c_all as f64
    }

    pub fn gamma_r(&self, c_all: usize) -> f64 {
        self.regularization_factor * c_all as f64
    }
}

/// Correspondences fixed for one outer iteration.
#[derive(Clone, Debug, Default)]
pub struct CorrespondenceSets {
    pub m2d: Vec<PointCorrespondence>,
    pub d2m: Vec<LineCorrespondence>,
    pub collision: Vec<Repulsion>,
    pub salient: Vec<PointCorrespondence>,
    pub physics: Vec<PointCorrespondence>,
}

impl CorrespondenceSets {
    /// `C_all`
    pub fn count(&self) -> usize {
        self.m2d.len() + self.d2m.len() + self.collision.len() + self.salient.len() + self.physics.len()
    }
}

/// Two barrier rows per revolute joint, `sqrt(gamma_a) exp(p (l - theta) / 2)`
/// and `sqrt(gamma_a) exp(p (theta - u) / 2)`, with their derivatives.
pub fn anatomy_residuals(sys: &mut ResidualSystem, skeleton: &Skeleton, pose: &Pose, gamma_a: f64, p: f64) {
    let s = gamma_a.sqrt();
    for (j, joint) in skeleton.joints().iter().enumerate() {
        if let JointKind::Revolute { lower, upper, .. } = joint.kind {
            let o = skeleton.dof_offset(j);
            let th = pose.theta[o];
            let rl = s * (p * (lower - th) / 2.0).exp();
            let ru = s * (p * (th - upper) / 2.0).exp();
            sys.push(rl, [(o, -p / 2.0 * rl)]);
            sys.push(ru, [(o, p / 2.0 * ru)]);
        }
    }
}

/// Rows `sqrt(gamma_r) (theta_k - previous_k)` over revolute angles.
pub fn regularization_residuals(sys: &mut ResidualSystem, skeleton: &Skeleton, pose: &Pose, previous: &Pose, gamma_r: f64) {
    let s = gamma_r.sqrt();
    for j in skeleton.revolute_joints() {
        let o = skeleton.dof_offset(j);
        sys.push(s * (pose.theta[o] - previous.theta[o]), [(o, s)]);
    }
}

/// Stacks all terms at `pose` with fixed correspondences. Terms with zero
/// weight contribute no rows.
pub fn assemble_posed(
    model: &SkinnedModel,
    posed: &PosedModel,
    pose: &Pose,
    previous: &Pose,
    sets: &CorrespondenceSets,
    weights: &EnergyWeights,
) -> Result<ResidualSystem> {
    let c_all = sets.count();
    let mut sys = ResidualSystem::new();
    if weights.m2d > 0.0 {
        sys.begin(Term::ModelToData);
        for c in &sets.m2d {
            push_correspondence(&mut sys, model, posed, c, weights.m2d.sqrt());
        }
    }
    if weights.d2m > 0.0 {
        sys.begin(Term::DataToModel);
        for c in &sets.d2m {
            push_line_rows(&mut sys, model, posed, c, weights.d2m.sqrt());
        }
    }
    if weights.gamma_c > 0.0 {
        sys.begin(Term::Collision);
        for c in &sets.collision {
            push_point_rows(&mut sys, model, posed, c.vertex, &c.target, weights.gamma_c.sqrt());
        }
    }
    if weights.gamma_s > 0.0 {
        sys.begin(Term::Salient);
        for c in &sets.salient {
            push_point_rows(&mut sys, model, posed, c.vertex, &c.target, weights.gamma_s.sqrt());
        }
    }
    if weights.gamma_ph > 0.0 {
        sys.begin(Term::Physics);
        let s = weights.gamma_ph.sqrt();
        for c in &sets.physics {
            match c.metric {
                Metric::PointToPoint => push_point_rows(&mut sys, model, posed, c.vertex, &c.target, s),
                Metric::PointToPlane => push_plane_row(&mut sys, model, posed, c.vertex, &c.target, Some(&c.target_normal), s),
            }
        }
    }
    let gamma_a = weights.gamma_a(c_all);
    if gamma_a > 0.0 {
        sys.begin(Term::Anatomy);
        anatomy_residuals(&mut sys, &model.skeleton, pose, gamma_a, weights.limit_sharpness);
    }
    let gamma_r = weights.gamma_r(c_all);
    if gamma_r > 0.0 {
        sys.begin(Term::Regularization);
        regularization_residuals(&mut sys, &model.skeleton, pose, previous, gamma_r);
    }
    let sys = sys.finish();
    if sys.is_empty() {
        return Err(Error::InsufficientObservation);
    }
    Ok(sys)
}

pub fn assemble(
    model: &SkinnedModel,
    pose: &Pose,
    previous: &Pose,
    sets: &CorrespondenceSets,
    weights: &EnergyWeights,
) -> Result<ResidualSystem> {
    let posed = model.pose(pose, JacobianMode::Local)?;
    assemble_posed(model, &posed, pose, previous, sets, weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DampingParams {
    pub initial: f64,
    pub factor: f64,
    pub max_retries: usize,
}

impl Default for DampingParams {
    fn default() -> Self {
        Self {
            initial: 1e-6,
            factor: 10.0,
            max_retries: 5,
        }
    }
}

/// Damping state carried across the iterations of one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Damping {
    pub mu: f64,
    pub params: DampingParams,
}

impl Damping {
    pub fn new(params: DampingParams) -> Self {
        Self { mu: params.initial, params }
    }
}

/// Result of one damped step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// Zero when no trial decreased the energy.
    pub delta: DVector<f64>,
    pub energy_before: f64,
    pub energy_after: f64,
    pub accepted: bool,
    pub retries: usize,
}

/// Solves `(J^T J + mu I) delta = -J^T r`.
pub fn damped_increment(h: &DMatrix<f64>, g: &DVector<f64>, mu: f64) -> DVector<f64> {
    let mut a = h.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += mu;
    }
    let rhs = -g;
    match a.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => a.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(g.len())),
    }
}

/// One Levenberg step: trial increments with growing damping until
/// `energy_at(delta)` does not exceed the current energy.
pub fn gauss_newton_step(
    sys: &ResidualSystem,
    dof: usize,
    damping: &mut Damping,
    mut energy_at: impl FnMut(&DVector<f64>) -> f64,
) -> StepResult {
    let (h, g) = sys.normal_equations(dof);
    let before = sys.energy();
    for retry in 0..=damping.params.max_retries {
        let delta = damped_increment(&h, &g, damping.mu);
        let after = energy_at(&delta);
        if after.is_finite() && after <= before {
            damping.mu /= damping.params.factor;
            return StepResult {
                delta,
                energy_before: before,
                energy_after: after,
                accepted: true,
                retries: retry,
            };
        }
        damping.mu *= damping.params.factor;
    }
    StepResult {
        delta: DVector::zeros(dof),
        energy_before: before,
        energy_after: before,
        accepted: false,
        retries: damping.params.max_retries,
    }
}
