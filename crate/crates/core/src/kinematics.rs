//! Twist kinematics, forward kinematics over a joint forest, linear blend
//! skinning and analytic pose Jacobians.
//!
//! Pose layout: every root joint owns six coordinates
//! `[tx, ty, tz, rx, ry, rz]` (translation in mm, rotation vector in rad) so
//! that `T_root = [exp([r]x) | t]`. Every revolute joint owns one angle.
//! Coordinates are laid out in joint order.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const UNIT_TOL: f64 = 1e-9;

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix of a rotation vector.
pub fn so3_exp(phi: &Vec3) -> Mat3 {
    let angle = phi.norm();
    let k = skew(phi);
    if angle < 1e-8 {
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let a = angle.sin() / angle;
    let b = (1.0 - angle.cos()) / (angle * angle);
    Mat3::identity() + a * k + b * k * k
}

/// Rotation vector of a rotation matrix, with angle in `[0, pi]`.
pub fn so3_log(r: &Mat3) -> Vec3 {
    let w = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let cos = (r.trace() - 1.0) * 0.5;
    let sin = 0.5 * w.norm();
    let angle = sin.atan2(cos);
    if angle < 1e-8 {
        return 0.5 * w;
    }
    if angle > 3.0 {
        // Near pi the antisymmetric part vanishes; recover the axis from
        // the symmetric part `(1 - cos) a a^T`.
        let s = (r + r.transpose()) * 0.5 - Mat3::identity() * cos;
        let diag = Vec3::new(s[(0, 0)], s[(1, 1)], s[(2, 2)]);
        let mut axis = s.column(diag.imax()).into_owned();
        axis /= axis.norm();
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        return axis * angle;
    }
    w * (angle / (2.0 * sin))
}

/// Left Jacobian of SO(3): `exp(phi + d) ~= exp(J_l(phi) d) exp(phi)`.
pub fn so3_left_jacobian(phi: &Vec3) -> Mat3 {
    let angle = phi.norm();
    let k = skew(phi);
    if angle < 1e-6 {
        return Mat3::identity() + 0.5 * k + k * k / 6.0;
    }
    let a2 = angle * angle;
    Mat3::identity() + (1.0 - angle.cos()) / a2 * k + (angle - angle.sin()) / (a2 * angle) * k * k
}

/// Rigid motion `x -> R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    pub fn from_rotation_vector(phi: Vec3, t: Vec3) -> Self {
        Self::new(so3_exp(&phi), t)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Largest elementwise difference of the 3x4 matrices.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let r = (self.rotation - other.rotation).abs().max();
        let t = (self.translation - other.translation).abs().max();
        r.max(t)
    }

    pub fn is_proper_rotation(&self, tol: f64) -> bool {
        let rtr = self.rotation.transpose() * self.rotation;
        (rtr - Mat3::identity()).abs().max() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// A scaled twist `theta * (u, omega)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist {
    pub omega: Vec3,
    pub u: Vec3,
    pub theta: f64,
}

impl Twist {
    pub fn new(omega: Vec3, u: Vec3, theta: f64) -> Result<Self> {
        let t = Self { omega, u, theta };
        t.validate()?;
        Ok(t)
    }

    /// Rotation by `theta` about the line through `point` with direction `axis`.
    pub fn revolute(axis: Vec3, point: Vec3, theta: f64) -> Result<Self> {
        Self::new(axis, point.cross(&axis), theta)
    }

    pub fn translation(direction: Vec3, distance: f64) -> Self {
        Self {
            omega: Vec3::zeros(),
            u: direction,
            theta: distance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega == Vec3::zeros() {
            return Ok(());
        }
        let norm = self.omega.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidTwist { norm });
        }
        Ok(())
    }

    pub fn negated(&self) -> Self {
        Self {
            theta: -self.theta,
            ..*self
        }
    }

    pub fn exp(&self) -> Result<RigidTransform> {
        exp_twist(self)
    }
}

/// Exponential map of a twist, closed form.
pub fn exp_twist(t: &Twist) -> Result<RigidTransform> {
    t.validate()?;
    if t.omega == Vec3::zeros() {
        return Ok(RigidTransform::from_translation(t.u * t.theta));
    }
    let w = t.omega;
    let k = skew(&w);
    let r = Mat3::identity() + t.theta.sin() * k + (1.0 - t.theta.cos()) * k * k;
    let trans = (Mat3::identity() - r) * w.cross(&t.u) + w * w.dot(&t.u) * t.theta;
    Ok(RigidTransform::new(r, trans))
}

#[derive(Clone, Debug, PartialEq)]
pub enum JointKind {
    /// Free-floating 6-DoF base of a kinematic tree.
    Root,
    /// Single-axis rotation; `axis` is unit length and `point` lies on the
    /// axis, both in rest-pose model coordinates.
    Revolute {
        axis: Vec3,
        point: Vec3,
        lower: f64,
        upper: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub kind: JointKind,
}

impl Joint {
    pub fn root(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            parent: None,
            kind: JointKind::Root,
        }
    }

    pub fn revolute(
        name: impl Into<String>,
        parent: usize,
        axis: Vec3,
        point: Vec3,
        limits: (f64, f64),
    ) -> Self {
        Self {
            name: name.into(),
            parent: Some(parent),
            kind: JointKind::Revolute {
                axis,
                point,
                lower: limits.0,
                upper: limits.1,
            },
        }
    }

    pub fn is_root(&self) -> bool {
        matches!(self.kind, JointKind::Root)
    }

    pub fn dof(&self) -> usize {
        match self.kind {
            JointKind::Root => 6,
            JointKind::Revolute { .. } => 1,
        }
    }
}

/// Joint forest in topological order.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
    dof_offset: Vec<usize>,
    dof_count: usize,
    children: Vec<Vec<usize>>,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        let mut dof_offset = Vec::with_capacity(joints.len());
        let mut dof_count = 0;
        let mut children = vec![Vec::new(); joints.len()];
        for (i, j) in joints.iter().enumerate() {
            match (&j.kind, j.parent) {
                (JointKind::Root, None) => {}
                (JointKind::Root, Some(_)) => {
                    return Err(Error::InvalidSkeleton(format!("root joint {} has a parent", j.name)))
                }
                (JointKind::Revolute { .. }, None) => {
                    return Err(Error::InvalidSkeleton(format!(
                        "revolute joint {} has no parent",
                        j.name
                    )))
                }
                (JointKind::Revolute { axis, lower, upper, .. }, Some(p)) => {
                    if p >= i {
                        return Err(Error::InvalidSkeleton(format!(
                            "parent of joint {} does not precede it",
                            j.name
                        )));
                    }
                    if (axis.norm() - 1.0).abs() > 1e-6 {
                        return Err(Error::InvalidSkeleton(format!("axis of joint {} is not unit", j.name)));
                    }
                    if lower > upper {
                        return Err(Error::InvalidSkeleton(format!(
                            "joint {} has lower limit above upper limit",
                            j.name
                        )));
                    }
                    children[p].push(i);
                }
            }
            dof_offset.push(dof_count);
            dof_count += j.dof();
        }
        Ok(Self {
            joints,
            dof_offset,
            dof_count,
            children,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn dof_offset(&self, joint: usize) -> usize {
        self.dof_offset[joint]
    }

    pub fn children(&self, joint: usize) -> &[usize] {
        &self.children[joint]
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        self.joints.iter().enumerate().filter(|(_, j)| j.is_root()).map(|(i, _)| i)
    }

    pub fn revolute_joints(&self) -> impl Iterator<Item = usize> + '_ {
        self.joints.iter().enumerate().filter(|(_, j)| !j.is_root()).map(|(i, _)| i)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// Root joint of the tree containing `joint`.
    pub fn root_of(&self, mut joint: usize) -> usize {
        while let Some(p) = self.joints[joint].parent {
            joint = p;
        }
        joint
    }

    /// True when `ancestor` lies on the chain from `joint` to its root
    /// (inclusive of `joint` itself).
    pub fn is_ancestor(&self, ancestor: usize, mut joint: usize) -> bool {
        loop {
            if joint == ancestor {
                return true;
            }
            match self.joints[joint].parent {
                Some(p) => joint = p,
                None => return false,
            }
        }
    }

    /// World position of each joint: the axis point for revolute joints and
    /// the frame origin for roots.
    pub fn joint_positions(&self, transforms: &[RigidTransform]) -> Vec<Vec3> {
        self.joints
            .iter()
            .zip(transforms)
            .map(|(j, t)| match &j.kind {
                JointKind::Root => t.translation,
                JointKind::Revolute { point, .. } => t.transform_point(point),
            })
            .collect()
    }
}

/// Full parameter vector of a skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub theta: DVector<f64>,
}

impl Pose {
    pub fn zeros(skeleton: &Skeleton) -> Self {
        Self {
            theta: DVector::zeros(skeleton.dof_count()),
        }
    }

    pub fn from_vec(theta: Vec<f64>) -> Self {
        Self {
            theta: DVector::from_vec(theta),
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn check(&self, skeleton: &Skeleton) -> Result<()> {
        if self.theta.len() != skeleton.dof_count() {
            return Err(Error::PoseLength {
                expected: skeleton.dof_count(),
                got: self.theta.len(),
            });
        }
        Ok(())
    }

    pub fn root_transform(&self, skeleton: &Skeleton, root: usize) -> RigidTransform {
        let o = skeleton.dof_offset(root);
        let t = Vec3::new(self.theta[o], self.theta[o + 1], self.theta[o + 2]);
        let r = Vec3::new(self.theta[o + 3], self.theta[o + 4], self.theta[o + 5]);
        RigidTransform::from_rotation_vector(r, t)
    }

    pub fn set_root_transform(&mut self, skeleton: &Skeleton, root: usize, t: &RigidTransform) {
        let o = skeleton.dof_offset(root);
        let r = so3_log(&t.rotation);
        for k in 0..3 {
            self.theta[o + k] = t.translation[k];
            self.theta[o + 3 + k] = r[k];
        }
    }

    pub fn angle(&self, skeleton: &Skeleton, joint: usize) -> f64 {
        self.theta[skeleton.dof_offset(joint)]
    }

    pub fn set_angle(&mut self, skeleton: &Skeleton, joint: usize, value: f64) {
        let o = skeleton.dof_offset(joint);
        self.theta[o] = value;
    }

    /// Apply a solver increment expressed in local coordinates: revolute
    /// angles add; each root is updated by `R <- exp([dr]x) R`, `t <- t + dt`,
    /// which rotates the root about its current origin. The stored rotation
    /// vector is re-extracted so it never leaves `[0, pi]`.
    pub fn retract(&self, skeleton: &Skeleton, delta: &DVector<f64>) -> Pose {
        let mut out = self.clone();
        for (i, joint) in skeleton.joints().iter().enumerate() {
            let o = skeleton.dof_offset(i);
            if joint.is_root() {
                let base = self.root_transform(skeleton, i);
                let dt = Vec3::new(delta[o], delta[o + 1], delta[o + 2]);
                let dr = Vec3::new(delta[o + 3], delta[o + 4], delta[o + 5]);
                let updated = RigidTransform::new(so3_exp(&dr) * base.rotation, base.translation + dt);
                out.set_root_transform(skeleton, i, &updated);
            } else {
                out.theta[o] += delta[o];
            }
        }
        out
    }
}

/// Bone transforms `T_j(theta)`: roots use their 6-DoF coordinates,
/// revolute joints compose `T_parent * exp(theta_j xi_j)`.
pub fn forward_kinematics(skeleton: &Skeleton, pose: &Pose) -> Result<Vec<RigidTransform>> {
    pose.check(skeleton)?;
    let mut out: Vec<RigidTransform> = Vec::with_capacity(skeleton.len());
    for (i, joint) in skeleton.joints().iter().enumerate() {
        let t = match (&joint.kind, joint.parent) {
            (JointKind::Root, _) => pose.root_transform(skeleton, i),
            (JointKind::Revolute { axis, point, .. }, Some(p)) => {
                let local = exp_twist(&Twist::revolute(*axis, *point, pose.angle(skeleton, i))?)?;
                out[p].compose(&local)
            }
            (JointKind::Revolute { .. }, None) => unreachable!("validated in Skeleton::new"),
        };
        out.push(t);
    }
    Ok(out)
}

/// Sparse per-vertex skinning weights `kappa_{v,j}`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SkinWeights {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SkinWeights {
    pub fn new(rows: Vec<Vec<(usize, f64)>>) -> Self {
        Self { rows }
    }

    /// Every vertex fully attached to one bone.
    pub fn rigid(bones: &[usize]) -> Self {
        Self {
            rows: bones.iter().map(|&b| vec![(b, 1.0)]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, vertex: usize) -> &[(usize, f64)] {
        &self.rows[vertex]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Bone with the largest weight.
    pub fn dominant_bone(&self, vertex: usize) -> usize {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for &(j, w) in &self.rows[vertex] {
            if w > best.1 || (w == best.1 && j < best.0) {
                best = (j, w);
            }
        }
        best.0
    }

    pub fn validate(&self, bone_count: usize, tol: f64) -> Result<()> {
        for (v, row) in self.rows.iter().enumerate() {
            if let Some(&(j, _)) = row.iter().find(|(j, _)| *j >= bone_count) {
                return Err(Error::InvalidMesh(format!("vertex {v} weighted to unknown bone {j}")));
            }
            let sum: f64 = row.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > tol || row.iter().any(|(_, w)| *w < 0.0) {
                return Err(Error::WeightSum { vertex: v, sum });
            }
        }
        Ok(())
    }
}

/// `v(theta) = sum_j kappa_{v,j} T_j(theta) T_j(0)^-1 v(0)`, and the same
/// blend applied to normals (rotation part only, renormalized).
pub fn lbs_deform(
    rest_vertices: &[Vec3],
    rest_normals: Option<&[Vec3]>,
    weights: &SkinWeights,
    rest_transforms: &[RigidTransform],
    transforms: &[RigidTransform],
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    if weights.len() != rest_vertices.len() {
        return Err(Error::LengthMismatch(format!(
            "{} weight rows for {} vertices",
            weights.len(),
            rest_vertices.len()
        )));
    }
    weights.validate(transforms.len(), 1e-6)?;
    let skinning = skinning_transforms(rest_transforms, transforms);
    let vertices = rest_vertices
        .iter()
        .enumerate()
        .map(|(i, v)| blend_point(&skinning, weights.row(i), v))
        .collect();
    let normals = match rest_normals {
        Some(ns) => ns
            .iter()
            .enumerate()
            .map(|(i, n)| blend_normal(&skinning, weights.row(i), n))
            .collect(),
        None => Vec::new(),
    };
    Ok((vertices, normals))
}

pub fn skinning_transforms(rest: &[RigidTransform], posed: &[RigidTransform]) -> Vec<RigidTransform> {
    posed.iter().zip(rest).map(|(t, r)| t.compose(&r.inverse())).collect()
}

fn blend_point(skinning: &[RigidTransform], row: &[(usize, f64)], v: &Vec3) -> Vec3 {
    row.iter().fold(Vec3::zeros(), |acc, &(j, w)| acc + w * skinning[j].transform_point(v))
}

fn blend_normal(skinning: &[RigidTransform], row: &[(usize, f64)], n: &Vec3) -> Vec3 {
    let m = row.iter().fold(Vec3::zeros(), |acc, &(j, w)| acc + w * (skinning[j].rotation * n));
    let len = m.norm();
    if len > 0.0 {
        m / len
    } else {
        m
    }
}

/// How root rotation columns of a Jacobian are expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianMode {
    /// Derivative with respect to the stored rotation-vector coordinates.
    Coordinates,
    /// Derivative with respect to a left-multiplied rotation increment, the
    /// parameterization consumed by [`Pose::retract`].
    Local,
}

/// Sparse 3xN Jacobian block: `(pose coordinate, column)` pairs sorted by
/// coordinate, without duplicates.
pub type SparseColumns = Vec<(usize, Vec3)>;

/// Kinematic quantities of a skeleton at one pose, shared by all vertex
/// Jacobian evaluations.
#[derive(Clone, Debug)]
pub struct SkeletonState {
    pub transforms: Vec<RigidTransform>,
    pub skinning: Vec<RigidTransform>,
    /// World axis direction and point for revolute joints.
    axes: Vec<Option<(Vec3, Vec3)>>,
    /// Rotation Jacobian for roots.
    root_rot: Vec<Option<Mat3>>,
    /// Ancestor chain of every joint, joint first.
    chains: Vec<Vec<usize>>,
    dof_offset: Vec<usize>,
}

impl SkeletonState {
    pub fn new(
        skeleton: &Skeleton,
        pose: &Pose,
        rest_transforms: &[RigidTransform],
        mode: JacobianMode,
    ) -> Result<Self> {
        let transforms = forward_kinematics(skeleton, pose)?;
        let skinning = skinning_transforms(rest_transforms, &transforms);
        let mut axes = Vec::with_capacity(skeleton.len());
        let mut root_rot = Vec::with_capacity(skeleton.len());
        let mut chains = Vec::with_capacity(skeleton.len());
        for (i, joint) in skeleton.joints().iter().enumerate() {
            match (&joint.kind, joint.parent) {
                (JointKind::Revolute { axis, point, .. }, Some(p)) => {
                    axes.push(Some((transforms[p].rotation * axis, transforms[p].transform_point(point))));
                    root_rot.push(None);
                }
                _ => {
                    axes.push(None);
                    let o = skeleton.dof_offset(i);
                    let phi = Vec3::new(pose.theta[o + 3], pose.theta[o + 4], pose.theta[o + 5]);
                    root_rot.push(Some(match mode {
                        JacobianMode::Coordinates => so3_left_jacobian(&phi),
                        JacobianMode::Local => Mat3::identity(),
                    }));
                }
            }
            let mut chain = vec![i];
            let mut k = i;
            while let Some(p) = skeleton.joints()[k].parent {
                chain.push(p);
                k = p;
            }
            chains.push(chain);
        }
        Ok(Self {
            transforms,
            skinning,
            axes,
            root_rot,
            chains,
            dof_offset: (0..skeleton.len()).map(|j| skeleton.dof_offset(j)).collect(),
        })
    }

    pub fn deform_point(&self, row: &[(usize, f64)], v0: &Vec3) -> Vec3 {
        blend_point(&self.skinning, row, v0)
    }

    pub fn deform_normal(&self, row: &[(usize, f64)], n0: &Vec3) -> Vec3 {
        blend_normal(&self.skinning, row, n0)
    }

    /// `d v / d theta` for a skinned rest vertex.
    pub fn point_jacobian(&self, row: &[(usize, f64)], v0: &Vec3) -> SparseColumns {
        let mut cols: SparseColumns = Vec::new();
        for &(bone, w) in row {
            if w == 0.0 {
                continue;
            }
            let vj = self.skinning[bone].transform_point(v0);
            for &k in &self.chains[bone] {
                let o = self.dof_offset[k];
                match (&self.axes[k], &self.root_rot[k]) {
                    (Some((a, q)), _) => add_col(&mut cols, o, w * a.cross(&(vj - q))),
                    (None, Some(jl)) => {
                        let lever = vj - self.transforms[k].translation;
                        for c in 0..3 {
                            add_col(&mut cols, o + c, w * Vec3::ith(c, 1.0));
                        }
                        let rot = -skew(&lever) * jl;
                        for c in 0..3 {
                            add_col(&mut cols, o + 3 + c, w * rot.column(c).into_owned());
                        }
                    }
                    (None, None) => unreachable!(),
                }
            }
        }
        cols.sort_by_key(|c| c.0);
        cols
    }

    /// `d n / d theta` for the renormalized blended normal.
    pub fn normal_jacobian(&self, row: &[(usize, f64)], n0: &Vec3) -> SparseColumns {
        let mut m = Vec3::zeros();
        let mut cols: SparseColumns = Vec::new();
        for &(bone, w) in row {
            if w == 0.0 {
                continue;
            }
            let mj = self.skinning[bone].rotation * n0;
            m += w * mj;
            for &k in &self.chains[bone] {
                let o = self.dof_offset[k];
                match (&self.axes[k], &self.root_rot[k]) {
                    (Some((a, _)), _) => add_col(&mut cols, o, w * a.cross(&mj)),
                    (None, Some(jl)) => {
                        let rot = -skew(&mj) * jl;
                        for c in 0..3 {
                            add_col(&mut cols, o + 3 + c, w * rot.column(c).into_owned());
                        }
                    }
                    (None, None) => unreachable!(),
                }
            }
        }
        let len = m.norm();
        if len == 0.0 {
            return Vec::new();
        }
        let n = m / len;
        let proj = (Mat3::identity() - n * n.transpose()) / len;
        cols.sort_by_key(|c| c.0);
        for c in &mut cols {
            c.1 = proj * c.1;
        }
        cols
    }
}

fn add_col(cols: &mut SparseColumns, index: usize, v: Vec3) {
    match cols.iter_mut().find(|c| c.0 == index) {
        Some(c) => c.1 += v,
        None => cols.push((index, v)),
    }
}

/// Dense per-vertex `3 x dof` Jacobians of LBS-deformed vertices with
/// respect to the pose coordinates.
pub fn pose_jacobian(
    skeleton: &Skeleton,
    pose: &Pose,
    rest_vertices: &[Vec3],
    weights: &SkinWeights,
    rest_transforms: &[RigidTransform],
    vertex_ids: &[usize],
) -> Result<Vec<DMatrix<f64>>> {
    let state = SkeletonState::new(skeleton, pose, rest_transforms, JacobianMode::Coordinates)?;
    Ok(vertex_ids
        .iter()
        .map(|&v| {
            let mut j = DMatrix::zeros(3, skeleton.dof_count());
            for (c, col) in state.point_jacobian(weights.row(v), &rest_vertices[v]) {
                j.fixed_view_mut::<3, 1>(0, c).copy_from(&col);
            }
            j
        })
        .collect())
}
