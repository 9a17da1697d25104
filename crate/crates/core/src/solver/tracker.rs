use serde::{Deserialize, Serialize};

use super::{assemble, assemble_posed, gauss_newton_step, CorrespondenceSets, Damping, DampingParams, EnergyWeights, StepResult};
use crate::collision::{collision_correspondences, find_collisions, DEFAULT_SIGMA};
use crate::data_terms::{data_to_model, model_to_data, GatingParams, Metric};
use crate::error::{Error, Result};
use crate::geometry::{
    bilateral_smooth_and_normals, depth_discontinuities, distance_transform, render_depth, BilateralParams, DepthFrame,
    NearestNeighborIndex, PointCloud, Rendering,
};
use crate::kinematics::{JacobianMode, Pose};
use crate::model::{PosedModel, SkinnedModel};
use crate::physics::{evaluate_physics, PhysicsConfig, StabilityReport};
use crate::salient::{assignment_costs, fingertip_regions, salient_correspondences, solve_assignment, Detection, WeightMode, CONFIDENCE_THRESHOLD};

/// When the outer loop stops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stopping {
    Fixed { iterations: usize },
    /// Mean joint displacement of a step below `eps_mm`, or `max_iterations`.
    Epsilon { eps_mm: f64, max_iterations: usize },
}

impl Default for Stopping {
    fn default() -> Self {
        Stopping::Fixed { iterations: 10 }
    }
}

impl Stopping {
    pub fn max_iterations(&self) -> usize {
        match *self {
            Stopping::Fixed { iterations } => iterations,
            Stopping::Epsilon { max_iterations, .. } => max_iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub weights: EnergyWeights,
    pub metric: Metric,
    pub gating: GatingParams,
    pub stopping: Stopping,
    /// Iterations for the first frame of a sequence.
    pub first_frame_iterations: Option<usize>,
    pub bilateral: BilateralParams,
    /// Grid cell (mm) of the closest-point index.
    pub nn_cell: f64,
    pub collision_sigma: f64,
    pub weight_mode: WeightMode,
    pub confidence_threshold: f64,
    pub physics: PhysicsConfig,
    pub damping: DampingParams,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            weights: EnergyWeights::default(),
            metric: Metric::PointToPlane,
            gating: GatingParams::default(),
            stopping: Stopping::default(),
            first_frame_iterations: Some(50),
            bilateral: BilateralParams::default(),
            nn_cell: 10.0,
            collision_sigma: DEFAULT_SIGMA,
            weight_mode: WeightMode::Confidence,
            confidence_threshold: CONFIDENCE_THRESHOLD,
            physics: PhysicsConfig::default(),
            damping: DampingParams::default(),
        }
    }
}

/// Per-frame data shared by all iterations.
#[derive(Clone, Debug)]
pub struct PreparedFrame {
    pub frame: DepthFrame,
    pub cloud: PointCloud,
    pub index: NearestNeighborIndex,
    pub edges: Vec<bool>,
}

impl PreparedFrame {
    pub fn new(frame: &DepthFrame, config: &TrackerConfig) -> Self {
        let cloud = bilateral_smooth_and_normals(frame, config.bilateral.spatial_sigma, config.bilateral.range_sigma);
        let index = NearestNeighborIndex::new(&cloud.points, config.nn_cell);
        let edges = depth_discontinuities(frame, config.gating.edge_jump);
        Self {
            frame: frame.clone(),
            cloud,
            index,
            edges,
        }
    }
}

pub struct FrameInput<'a> {
    pub frame: &'a PreparedFrame,
    pub detections: &'a [Detection],
}

/// Outcome of tracking one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_energy: f64,
    pub energy_trace: Vec<StepResult>,
    /// Mean joint displacement (mm) of the last step.
    pub displacement: f64,
    pub converged: bool,
    /// Stability verdict at the final iteration, if an object is tracked.
    pub stability: Option<StabilityReport>,
}

#[derive(Clone, Debug)]
pub struct FrameResult {
    pub pose: Pose,
    pub report: Option<SolveReport>,
    pub error: Option<String>,
}

/// Builds every correspondence set at the current pose. The data sets are
/// always searched since they define `C_all`; the other sets stay empty when
/// their weight is zero.
pub fn build_correspondences(
    model: &SkinnedModel,
    posed: &PosedModel,
    rendering: &Rendering,
    input: &FrameInput,
    config: &TrackerConfig,
) -> Result<(CorrespondenceSets, Option<StabilityReport>)> {
    let w = &config.weights;
    let frame = input.frame;
    let mut sets = CorrespondenceSets::default();
    if !frame.cloud.is_empty() {
        sets.m2d = model_to_data(posed, &rendering.visible, &frame.cloud, &frame.index, &config.gating, config.metric);
    }
    if frame.edges.iter().any(|&e| e) {
        let model_edges = depth_discontinuities(&rendering.frame, config.gating.edge_jump);
        if model_edges.iter().any(|&e| e) {
            let dt = distance_transform(&model_edges, frame.frame.width())?;
            sets.d2m = data_to_model(&frame.frame, &frame.edges, rendering, Some(&dt), posed, &config.gating);
        }
    }
    if w.gamma_c > 0.0 {
        let pairs = find_collisions(model, &posed.vertices);
        sets.collision = collision_correspondences(&pairs, model, posed, config.collision_sigma);
    }
    if w.gamma_s > 0.0 && !model.fingertips.is_empty() {
        let dets: Vec<Detection> = input
            .detections
            .iter()
            .filter(|d| d.confidence >= config.confidence_threshold)
            .cloned()
            .collect();
        if !dets.is_empty() {
            let tips = fingertip_regions(model, posed, &rendering.visible);
            let (costs, ws) = assignment_costs(&dets, &tips, config.weight_mode);
            let sol = solve_assignment(&costs, &ws, w.lambda);
            sets.salient = salient_correspondences(&sol, &costs, &dets, &tips, posed, &frame.frame.intrinsics);
        }
    }
    let mut stability = None;
    if w.gamma_ph > 0.0 {
        let outcome = evaluate_physics(model, posed, &config.physics, config.metric)?;
        stability = outcome.report;
        sets.physics = outcome.correspondences;
    }
    Ok((sets, stability))
}

fn mean_displacement(a: &[crate::kinematics::Vec3], b: &[crate::kinematics::Vec3]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

/// Alternates correspondence search and damped Gauss-Newton steps starting
/// from `previous`, which is also the regularization target.
pub fn track_frame(
    model: &SkinnedModel,
    input: &FrameInput,
    previous: &Pose,
    config: &TrackerConfig,
    stopping: Stopping,
) -> Result<(Pose, SolveReport)> {
    previous.check(&model.skeleton)?;
    let dof = model.dof_count();
    let k = &input.frame.frame.intrinsics;
    let mut pose = previous.clone();
    let mut damping = Damping::new(config.damping);
    let mut report = SolveReport {
        iterations: 0,
        final_energy: 0.0,
        energy_trace: Vec::new(),
        displacement: 0.0,
        converged: false,
        stability: None,
    };
    let mut joints = model.joint_positions(&pose)?;
    for it in 0..stopping.max_iterations() {
        let posed = model.pose(&pose, JacobianMode::Local)?;
        let rendering = render_depth(&posed.vertices, &model.mesh.triangles, k);
        let (sets, stability) = build_correspondences(model, &posed, &rendering, input, config)?;
        report.stability = stability;
        let sys = match assemble_posed(model, &posed, &pose, previous, &sets, &config.weights) {
            Ok(s) => s,
            Err(Error::InsufficientObservation) if it > 0 => break,
            Err(e) => return Err(e),
        };
        let step = gauss_newton_step(&sys, dof, &mut damping, |delta| {
            let trial = pose.retract(&model.skeleton, delta);
            assemble(model, &trial, previous, &sets, &config.weights)
                .map(|s| s.energy())
                .unwrap_or(f64::INFINITY)
        });
        report.iterations = it + 1;
        report.final_energy = step.energy_after;
        let accepted = step.accepted;
        if accepted {
            pose = pose.retract(&model.skeleton, &step.delta);
        }
        report.energy_trace.push(step);
        let next = model.joint_positions(&pose)?;
        report.displacement = mean_displacement(&next, &joints);
        joints = next;
        if !accepted {
            break;
        }
        if let Stopping::Epsilon { eps_mm, .. } = stopping {
            if report.displacement < eps_mm {
                report.converged = true;
                break;
            }
        }
    }
    if matches!(stopping, Stopping::Fixed { .. }) {
        report.converged = report.iterations == stopping.max_iterations();
    }
    Ok((pose, report))
}

/// Tracks frames in order, each starting from the previous estimate. A
/// frame that fails keeps the previous pose and records the error.
pub fn track_sequence(
    model: &SkinnedModel,
    frames: &[DepthFrame],
    detections: &[Vec<Detection>],
    initial: &Pose,
    config: &TrackerConfig,
) -> Vec<FrameResult> {
    let mut previous = initial.clone();
    let mut out = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let prepared = PreparedFrame::new(frame, config);
        let dets = detections.get(i).map(Vec::as_slice).unwrap_or(&[]);
        let stopping = match (i, config.first_frame_iterations) {
            (0, Some(n)) => Stopping::Fixed { iterations: n },
            _ => config.stopping,
        };
        let input = FrameInput {
            frame: &prepared,
            detections: dets,
        };
        match track_frame(model, &input, &previous, config, stopping) {
            Ok((pose, report)) => {
                previous = pose.clone();
                out.push(FrameResult {
                    pose,
                    report: Some(report),
                    error: None,
                });
            }
            Err(e) => out.push(FrameResult {
                pose: previous.clone(),
                report: None,
                error: Some(e.to_string()),
            }),
        }
    }
    out
}
