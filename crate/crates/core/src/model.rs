//! Skinned models: a rest mesh bound to a skeleton, with part labels,
//! fingertip regions and per-body physical properties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::kinematics::{
    forward_kinematics, JacobianMode, Pose, RigidTransform, SkeletonState, Skeleton, SkinWeights, Vec3,
};

/// Rigid segment of a model used for collision filtering and physics.
#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub name: String,
    /// May act as a support candidate for a grasped object.
    pub support: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fingertip {
    pub name: String,
    pub vertices: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalProperties {
    /// kg
    pub mass: f64,
    pub friction: f64,
    pub restitution: f64,
}

impl Default for PhysicalProperties {
    fn default() -> Self {
        Self {
            mass: 1.0,
            friction: 1.2,
            restitution: 0.5,
        }
    }
}

/// One kinematic tree of a model, rooted at a 6-DoF joint.
#[derive(Clone, Debug, PartialEq)]
pub struct Body {
    pub name: String,
    pub root: usize,
    /// Set for manipulated objects.
    pub object: Option<PhysicalProperties>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkinnedModel {
    pub name: String,
    pub mesh: TriangleMesh,
    pub skeleton: Skeleton,
    pub weights: SkinWeights,
    pub rest_transforms: Vec<RigidTransform>,
    pub parts: Vec<Part>,
    pub joint_part: Vec<usize>,
    pub fingertips: Vec<Fingertip>,
    pub bodies: Vec<Body>,
    joint_body: Vec<usize>,
    vertex_part: Vec<usize>,
    part_parent: Vec<Option<usize>>,
}

impl SkinnedModel {
    /// Assembles and validates a model. Rest transforms are the forward
    /// kinematics of the zero pose.
    pub fn new(
        name: impl Into<String>,
        mesh: TriangleMesh,
        skeleton: Skeleton,
        weights: SkinWeights,
        parts: Vec<Part>,
        joint_part: Vec<usize>,
        fingertips: Vec<Fingertip>,
        body_names: Vec<(String, Option<PhysicalProperties>)>,
    ) -> Result<Self> {
        mesh.validate()?;
        if weights.len() != mesh.vertices.len() {
            return Err(Error::LengthMismatch(format!(
                "{} weight rows for {} vertices",
                weights.len(),
                mesh.vertices.len()
            )));
        }
        weights.validate(skeleton.len(), 1e-6)?;
        if joint_part.len() != skeleton.len() || joint_part.iter().any(|&p| p >= parts.len()) {
            return Err(Error::InvalidSkeleton("every joint needs a valid part label".into()));
        }
        for f in &fingertips {
            if f.vertices.is_empty() || f.vertices.iter().any(|&v| v >= mesh.vertices.len()) {
                return Err(Error::InvalidMesh(format!("fingertip {} has invalid vertices", f.name)));
            }
        }
        let roots: Vec<usize> = skeleton.roots().collect();
        if body_names.len() != roots.len() {
            return Err(Error::InvalidSkeleton(format!(
                "{} body descriptions for {} roots",
                body_names.len(),
                roots.len()
            )));
        }
        let bodies: Vec<Body> = roots
            .iter()
            .zip(body_names)
            .map(|(&root, (name, object))| Body { name, root, object })
            .collect();
        let joint_body = (0..skeleton.len())
            .map(|j| {
                let r = skeleton.root_of(j);
                bodies.iter().position(|b| b.root == r).unwrap()
            })
            .collect();
        let rest_transforms = forward_kinematics(&skeleton, &Pose::zeros(&skeleton))?;
        let vertex_part = (0..mesh.vertices.len())
            .map(|v| joint_part[weights.dominant_bone(v)])
            .collect();
        let mut part_parent = vec![None; parts.len()];
        for (j, joint) in skeleton.joints().iter().enumerate() {
            if let Some(p) = joint.parent {
                let (a, b) = (joint_part[p], joint_part[j]);
                if a != b && part_parent[b].is_none() {
                    part_parent[b] = Some(a);
                }
            }
        }
        Ok(Self {
            name: name.into(),
            mesh,
            skeleton,
            weights,
            rest_transforms,
            parts,
            joint_part,
            fingertips,
            bodies,
            joint_body,
            vertex_part,
            part_parent,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.skeleton.dof_count()
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertices.len()
    }

    pub fn vertex_part(&self, v: usize) -> usize {
        self.vertex_part[v]
    }

    pub fn vertex_body(&self, v: usize) -> usize {
        self.joint_body[self.weights.dominant_bone(v)]
    }

    pub fn joint_body(&self, j: usize) -> usize {
        self.joint_body[j]
    }

    pub fn part_body(&self, part: usize) -> usize {
        let j = self.joint_part.iter().position(|&p| p == part).unwrap_or(0);
        self.joint_body[j]
    }

    /// Parts are adjacent when equal or directly connected by a joint.
    pub fn parts_adjacent(&self, a: usize, b: usize) -> bool {
        a == b || self.part_parent[a] == Some(b) || self.part_parent[b] == Some(a)
    }

    /// Index of the first manipulated object body, if any.
    pub fn object_body(&self) -> Option<usize> {
        self.bodies.iter().position(|b| b.object.is_some())
    }

    /// Vertices grouped by part.
    pub fn part_vertices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.parts.len()];
        for v in 0..self.vertex_count() {
            out[self.vertex_part[v]].push(v);
        }
        out
    }

    /// Triangles whose vertices belong to `body`.
    pub fn body_triangles(&self, body: usize) -> Vec<usize> {
        (0..self.mesh.triangles.len())
            .filter(|&f| self.vertex_body(self.mesh.triangles[f][0]) == body)
            .collect()
    }

    pub fn pose(&self, pose: &Pose, mode: JacobianMode) -> Result<PosedModel> {
        let state = SkeletonState::new(&self.skeleton, pose, &self.rest_transforms, mode)?;
        let vertices = (0..self.vertex_count())
            .map(|v| state.deform_point(self.weights.row(v), &self.mesh.vertices[v]))
            .collect();
        let normals = (0..self.vertex_count())
            .map(|v| state.deform_normal(self.weights.row(v), &self.mesh.normals[v]))
            .collect();
        Ok(PosedModel {
            vertices,
            normals,
            state,
        })
    }

    /// Joint centers at a pose.
    pub fn joint_positions(&self, pose: &Pose) -> Result<Vec<Vec3>> {
        let t = forward_kinematics(&self.skeleton, pose)?;
        Ok(self.skeleton.joint_positions(&t))
    }

    /// Combines several models into one with multiple roots. Pose vectors of
    /// the result are the concatenation of the inputs' pose vectors.
    pub fn merge(name: impl Into<String>, models: &[SkinnedModel]) -> Result<Self> {
        let mut joints = Vec::new();
        let mut mesh = TriangleMesh::default();
        let mut rows = Vec::new();
        let mut parts = Vec::new();
        let mut joint_part = Vec::new();
        let mut fingertips = Vec::new();
        let mut bodies = Vec::new();
        for m in models {
            let (j0, v0, p0) = (joints.len(), mesh.vertices.len(), parts.len());
            for joint in m.skeleton.joints() {
                let mut joint = joint.clone();
                joint.parent = joint.parent.map(|p| p + j0);
                joints.push(joint);
            }
            mesh.append(&m.mesh);
            rows.extend(
                m.weights
                    .rows()
                    .iter()
                    .map(|r| r.iter().map(|&(j, w)| (j + j0, w)).collect::<Vec<_>>()),
            );
            parts.extend(m.parts.iter().map(|p| Part {
                name: format!("{}/{}", m.name, p.name),
                support: p.support,
            }));
            joint_part.extend(m.joint_part.iter().map(|p| p + p0));
            fingertips.extend(m.fingertips.iter().map(|f| Fingertip {
                name: format!("{}/{}", m.name, f.name),
                vertices: f.vertices.iter().map(|v| v + v0).collect(),
            }));
            bodies.extend(m.bodies.iter().map(|b| (format!("{}/{}", m.name, b.name), b.object)));
        }
        Self::new(
            name,
            mesh,
            Skeleton::new(joints)?,
            SkinWeights::new(rows),
            parts,
            joint_part,
            fingertips,
            bodies,
        )
    }

    /// Offset of each merged model's pose block, for use with [`SkinnedModel::merge`].
    pub fn pose_offsets(models: &[SkinnedModel]) -> Vec<usize> {
        models
            .iter()
            .scan(0, |acc, m| {
                let o = *acc;
                *acc += m.dof_count();
                Some(o)
            })
            .collect()
    }
}

/// A model deformed to one pose, with the state needed for Jacobians.
#[derive(Clone, Debug)]
pub struct PosedModel {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub state: SkeletonState,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Joint;

    fn two_boxes() -> SkinnedModel {
        let a = TriangleMesh::icosphere(Vec3::zeros(), 5.0, 0);
        let b = TriangleMesh::icosphere(Vec3::new(20.0, 0.0, 0.0), 5.0, 0);
        let mut mesh = a.clone();
        mesh.append(&b);
        let bones: Vec<usize> = (0..mesh.vertices.len()).map(|v| usize::from(v >= a.vertices.len())).collect();
        let skel = Skeleton::new(vec![
            Joint::root("root"),
            Joint::revolute("j", 0, Vec3::z(), Vec3::new(10.0, 0.0, 0.0), (-1.0, 1.0)),
        ])
        .unwrap();
        SkinnedModel::new(
            "m",
            mesh,
            skel,
            SkinWeights::rigid(&bones),
            vec![
                Part {
                    name: "a".into(),
                    support: false,
                },
                Part {
                    name: "b".into(),
                    support: true,
                },
            ],
            vec![0, 1],
            vec![],
            vec![("hand".into(), None)],
        )
        .unwrap()
    }

    #[test]
    fn parts_and_adjacency() {
        let m = two_boxes();
        assert!(m.parts_adjacent(0, 1));
        assert_eq!(m.vertex_part(0), 0);
        assert_eq!(m.vertex_part(m.vertex_count() - 1), 1);
        assert_eq!(m.part_vertices()[1].len(), 12);
    }

    #[test]
    fn merge_concatenates_pose_blocks() {
        let m = two_boxes();
        let merged = SkinnedModel::merge("scene", &[m.clone(), m.clone()]).unwrap();
        assert_eq!(merged.dof_count(), 14);
        assert_eq!(merged.bodies.len(), 2);
        assert_eq!(SkinnedModel::pose_offsets(&[m.clone(), m]), vec![0, 7]);
        assert!(!merged.parts_adjacent(1, 3));
        assert_eq!(merged.vertex_body(merged.vertex_count() - 1), 1);
    }

    #[test]
    fn rest_pose_reproduces_mesh() {
        let m = two_boxes();
        let p = m.pose(&Pose::zeros(&m.skeleton), JacobianMode::Local).unwrap();
        assert_eq!(p.vertices, m.mesh.vertices);
    }
}
