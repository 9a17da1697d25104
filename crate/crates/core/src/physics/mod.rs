//! Rigid-body stability check of the manipulated object and the search for
//! finger parts that would make it stable.
//!
//! Everything except the object is static. If the object moves by more than
//! a few millimetres when dropped, combinations of nearby finger parts are
//! moved into contact one hypothesis at a time and the combination that
//! keeps the object most still yields contact correspondences.

mod gjk;
mod hull;
mod sim;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_terms::{Metric, PointCorrespondence};
use crate::error::Result;
use crate::kinematics::Vec3;
use crate::model::{PosedModel, SkinnedModel};

pub use gjk::{gjk_distance, Proximity};
pub use hull::{ConvexHull, MassProperties};
pub use sim::{simulate_drop, RigidBodyScene, SimulationParams, StabilityReport, StaticBody};

/// Static box in the scene, e.g. a table top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub name: String,
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    #[serde(default = "default_scene_friction")]
    pub friction: f64,
    #[serde(default)]
    pub restitution: f64,
}

fn default_scene_friction() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    pub simulation: SimulationParams,
    /// mm/s^2
    pub gravity: [f64; 3],
    pub hand_friction: f64,
    pub hand_restitution: f64,
    /// Parts closer than this (mm) to the object are support candidates.
    pub candidate_distance: f64,
    /// Extra travel (mm) into the object when testing a hypothesis.
    pub grip_depth: f64,
    pub scene: Vec<SceneBox>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationParams::default(),
            gravity: [0.0, -9810.0, 0.0],
            hand_friction: 1.2,
            hand_restitution: 0.0,
            candidate_distance: 10.0,
            grip_depth: 1.0,
            scene: Vec::new(),
        }
    }
}

/// The posed model split into the dynamic object and static hulls.
#[derive(Clone, Debug)]
pub struct HandObjectScene {
    pub scene: RigidBodyScene,
    pub object_body: usize,
}

/// Builds the scene, or `None` when the model has no object body. Parts
/// whose vertices do not span a volume are left out.
pub fn hand_object_scene(model: &SkinnedModel, posed: &PosedModel, config: &PhysicsConfig) -> Result<Option<HandObjectScene>> {
    let Some(object_body) = model.object_body() else {
        return Ok(None);
    };
    let props = model.bodies[object_body].object.expect("object bodies carry properties");
    let object_points: Vec<Vec3> = (0..model.vertex_count())
        .filter(|&v| model.vertex_body(v) == object_body)
        .map(|v| posed.vertices[v])
        .collect();
    let object = ConvexHull::new(&object_points)?;
    let mut statics = Vec::new();
    for b in &config.scene {
        statics.push(StaticBody {
            name: b.name.clone(),
            hull: ConvexHull::cuboid(Vec3::from(b.center), Vec3::from(b.half_extents))?,
            friction: b.friction,
            restitution: b.restitution,
            part: None,
        });
    }
    for (part, verts) in model.part_vertices().iter().enumerate() {
        if model.part_body(part) == object_body {
            continue;
        }
        let pts: Vec<Vec3> = verts.iter().map(|&v| posed.vertices[v]).collect();
        if let Ok(hull) = ConvexHull::new(&pts) {
            statics.push(StaticBody {
                name: model.parts[part].name.clone(),
                hull,
                friction: config.hand_friction,
                restitution: config.hand_restitution,
                part: Some(part),
            });
        }
    }
    Ok(Some(HandObjectScene {
        scene: RigidBodyScene {
            object,
            properties: props,
            statics,
            gravity: Vec3::from(config.gravity),
        },
        object_body,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportCandidate {
    pub part: usize,
    /// mm
    pub distance: f64,
    pub part_point: Vec3,
    pub object_point: Vec3,
}

/// Eligible finger parts within `config.candidate_distance` of the object,
/// in part order.
pub fn support_candidates(model: &SkinnedModel, hs: &HandObjectScene, config: &PhysicsConfig) -> Vec<SupportCandidate> {
    hs.scene
        .statics
        .iter()
        .filter_map(|s| {
            let part = s.part.filter(|&p| model.parts[p].support)?;
            let prox = gjk_distance(&s.hull, &hs.scene.object);
            (prox.distance < config.candidate_distance).then_some(SupportCandidate {
                part,
                distance: prox.distance,
                part_point: prox.on_a,
                object_point: prox.on_b,
            })
        })
        .collect()
}

/// Subsets of `0..n` with 2 to 4 elements, by size then lexicographically.
pub fn support_subsets(n: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in 2..=4 {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinationSearch {
    /// Part ids of the winning combination.
    pub best: Option<Vec<usize>>,
    /// Every evaluated combination (part ids) with its simulation result.
    pub scores: Vec<(Vec<usize>, StabilityReport)>,
}

impl CombinationSearch {
    pub fn best_report(&self) -> Option<StabilityReport> {
        let best = self.best.as_ref()?;
        self.scores.iter().find(|(c, _)| c == best).map(|(_, r)| *r)
    }
}

fn translation_into_contact(c: &SupportCandidate, object_centroid: &Vec3, grip: f64) -> Vec3 {
    let gap = c.object_point - c.part_point;
    let dir = if gap.norm() > 1e-9 {
        gap.normalize()
    } else {
        (object_centroid - c.part_point).try_normalize(1e-12).unwrap_or_else(Vec3::zeros)
    };
    gap + dir * grip
}

/// Simulates every 2 to 4 element subset of the candidates with those
/// parts moved into contact and keeps the one with the least object motion.
pub fn select_support_combination(hs: &HandObjectScene, candidates: &[SupportCandidate], config: &PhysicsConfig) -> CombinationSearch {
    let centroid = hs.scene.object.mass_properties(hs.scene.properties.mass).centroid;
    let subsets = support_subsets(candidates.len());
    let scores: Vec<(Vec<usize>, StabilityReport)> = subsets
        .par_iter()
        .map(|subset| {
            let mut scene = hs.scene.clone();
            for &i in subset {
                let c = &candidates[i];
                let t = translation_into_contact(c, &centroid, config.grip_depth);
                for s in scene.statics.iter_mut().filter(|s| s.part == Some(c.part)) {
                    s.hull = s.hull.translated(&t);
                }
            }
            let parts = subset.iter().map(|&i| candidates[i].part).collect();
            (parts, simulate_drop(&scene, &config.simulation))
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, (_, r)) in scores.iter().enumerate() {
        if best.is_none_or(|b| r.displacement < scores[b].1.displacement) {
            best = Some(i);
        }
    }
    CombinationSearch {
        best: best.map(|i| scores[i].0.clone()),
        scores,
    }
}

pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// One correspondence per part: its vertex closest to the object surface,
/// pulled to the closest surface point. Plane rows use the object normal.
pub fn physics_correspondences(
    model: &SkinnedModel,
    posed: &PosedModel,
    object_body: usize,
    parts: &[usize],
    metric: Metric,
) -> Vec<PointCorrespondence> {
    let tris = model.body_triangles(object_body);
    let part_vertices = model.part_vertices();
    let mut out = Vec::new();
    for &part in parts {
        let mut best: Option<(f64, usize, Vec3, Vec3)> = None;
        for &v in &part_vertices[part] {
            let p = posed.vertices[v];
            for &t in &tris {
                let [a, b, c] = model.mesh.triangles[t].map(|k| posed.vertices[k]);
                let q = closest_point_on_triangle(&p, &a, &b, &c);
                let d = (q - p).norm_squared();
                if best.is_none_or(|(bd, _, _, _)| d < bd) {
                    let n = (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vec3::zeros);
                    best = Some((d, v, q, n));
                }
            }
        }
        if let Some((_, vertex, target, target_normal)) = best {
            out.push(PointCorrespondence {
                vertex,
                target,
                target_normal,
                metric,
            });
        }
    }
    out
}

/// Stability verdict, the combination search when unstable, and the
/// resulting contact correspondences.
#[derive(Clone, Debug, Default)]
pub struct PhysicsOutcome {
    pub report: Option<StabilityReport>,
    pub search: Option<CombinationSearch>,
    pub correspondences: Vec<PointCorrespondence>,
}

pub fn evaluate_physics(model: &SkinnedModel, posed: &PosedModel, config: &PhysicsConfig, metric: Metric) -> Result<PhysicsOutcome> {
    let Some(hs) = hand_object_scene(model, posed, config)? else {
        return Ok(PhysicsOutcome::default());
    };
    let report = simulate_drop(&hs.scene, &config.simulation);
    if report.stable {
        return Ok(PhysicsOutcome {
            report: Some(report),
            ..Default::default()
        });
    }
    let candidates = support_candidates(model, &hs, config);
    let search = select_support_combination(&hs, &candidates, config);
    let correspondences = match &search.best {
        Some(parts) => physics_correspondences(model, posed, hs.object_body, parts, metric),
        None => Vec::new(),
    };
    Ok(PhysicsOutcome {
        report: Some(report),
        search: Some(search),
        correspondences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_counts() {
        assert!(support_subsets(0).is_empty());
        assert!(support_subsets(1).is_empty());
        assert_eq!(support_subsets(2), vec![vec![0, 1]]);
        assert_eq!(support_subsets(5).len(), 25);
        assert_eq!(support_subsets(5)[0], vec![0, 1]);
        assert_eq!(support_subsets(5)[24], vec![1, 2, 3, 4]);
    }

    #[test]
    fn triangle_closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        assert!((closest_point_on_triangle(&Vec3::new(0.2, 0.2, 5.0), &a, &b, &c) - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c), a);
        assert_eq!(closest_point_on_triangle(&Vec3::new(0.5, -2.0, 1.0), &a, &b, &c), Vec3::new(0.5, 0.0, 0.0));
        let q = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn capsule_to_sphere_distance() {
        use crate::geometry::TriangleMesh;
        // Capsule along x with radius 8 whose surface is 7 mm from a sphere of radius 20.
        let mut pts = Vec::new();
        for i in 0..=10 {
            let x = -20.0 + 4.0 * i as f64;
            for k in 0..64 {
                let a = k as f64 / 64.0 * std::f64::consts::TAU;
                pts.push(Vec3::new(x, 8.0 * a.cos(), 8.0 * a.sin()));
            }
        }
        for end in [-20.0, 20.0] {
            let m = TriangleMesh::icosphere(Vec3::new(end, 0.0, 0.0), 8.0, 3);
            pts.extend(m.vertices);
        }
        let capsule = ConvexHull::new(&pts).unwrap();
        let sphere = ConvexHull::new(&TriangleMesh::icosphere(Vec3::new(0.0, 35.0, 0.0), 20.0, 3).vertices).unwrap();
        let d = gjk_distance(&capsule, &sphere).distance;
        assert!((d - 7.0).abs() < 0.1, "{d}");
    }
}
