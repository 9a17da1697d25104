use std::cell::OnceCell;

use serde::{Deserialize, Serialize};

use super::gjk::gjk_distance;
use super::hull::ConvexHull;
use crate::kinematics::{so3_exp, Mat3, Vec3};
use crate::model::PhysicalProperties;

#[derive(Clone, Debug, PartialEq)]
pub struct StaticBody {
    pub name: String,
    pub hull: ConvexHull,
    pub friction: f64,
    pub restitution: f64,
    /// Model part the hull was built from.
    pub part: Option<usize>,
}

/// One dynamic object among static hulls.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidBodyScene {
    pub object: ConvexHull,
    pub properties: PhysicalProperties,
    pub statics: Vec<StaticBody>,
    /// mm/s^2
    pub gravity: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationParams {
    pub steps: usize,
    /// s
    pub dt: f64,
    /// Gap (mm) under which a vertex counts as touching.
    pub contact_epsilon: f64,
    /// Displacement (mm) below which the object is stable.
    pub stable_threshold: f64,
    pub solver_iterations: usize,
    /// Maximum contacts kept per static body.
    pub manifold_size: usize,
    /// Tangential grip per mm of interpenetration, kg/s^2.
    pub grip_stiffness: f64,
    /// Approach speed (mm/s) above which restitution applies.
    pub restitution_threshold: f64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            steps: 35,
            dt: 0.1,
            contact_epsilon: 0.5,
            stable_threshold: 3.0,
            solver_iterations: 200,
            manifold_size: 4,
            grip_stiffness: 1e5,
            restitution_threshold: 100.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityReport {
    /// Centroid displacement, mm.
    pub displacement: f64,
    pub stable: bool,
}

#[derive(Clone, Copy, Debug)]
struct Contact {
    point: Vec3,
    /// From the static body towards the object.
    normal: Vec3,
    /// Positive when penetrating.
    depth: f64,
}

struct ObjectState<'a> {
    body_vertices: &'a [Vec3],
    body_planes: &'a [(Vec3, f64)],
    x: Vec3,
    r: Mat3,
}

impl ObjectState<'_> {
    fn world_vertices(&self) -> Vec<Vec3> {
        self.body_vertices.iter().map(|v| self.r * v + self.x).collect()
    }

    fn world_planes(&self) -> Vec<(Vec3, f64)> {
        self.body_planes
            .iter()
            .map(|(n, d)| {
                let nw = self.r * n;
                (nw, d + nw.dot(&self.x))
            })
            .collect()
    }
}

fn nearest_plane(planes: &[(Vec3, f64)], p: &Vec3) -> (Vec3, f64) {
    let mut best = (Vec3::zeros(), f64::NEG_INFINITY);
    for (n, d) in planes {
        let s = n.dot(p) - d;
        if s > best.1 {
            best = (*n, s);
        }
    }
    best
}

/// Vertices of either body within `reach` of the other, deepest first. With
/// no such vertex the closest points give a single speculative contact.
fn contacts_with(
    verts: &[Vec3],
    planes: &[(Vec3, f64)],
    stat: &StaticBody,
    reach: f64,
    hull: Option<&OnceCell<ConvexHull>>,
    keep: usize,
) -> Vec<Contact> {
    let mut out = Vec::new();
    for v in verts {
        let (n, sd) = nearest_plane(stat.hull.planes(), v);
        if sd <= reach {
            out.push(Contact {
                point: *v,
                normal: n,
                depth: -sd,
            });
        }
    }
    for p in stat.hull.vertices() {
        let (n, sd) = nearest_plane(planes, p);
        if sd <= reach {
            out.push(Contact {
                point: *p,
                normal: -n,
                depth: -sd,
            });
        }
    }
    if out.is_empty() {
        if let Some(hull) = hull {
            let obj = hull.get_or_init(|| ConvexHull::new(verts).expect("rigid motion keeps the hull valid"));
            let prox = gjk_distance(obj, &stat.hull);
            if prox.distance > 0.0 && prox.distance < reach {
                out.push(Contact {
                    point: prox.on_a,
                    normal: (prox.on_a - prox.on_b) / prox.distance,
                    depth: -prox.distance,
                });
            }
        }
    }
    out.sort_by(|a, b| b.depth.total_cmp(&a.depth));
    out.truncate(keep);
    out
}

fn bounds_gap(a: &[Vec3], b: &ConvexHull) -> f64 {
    let bb = b.bounds();
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for v in a {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let mut gap: f64 = 0.0;
    for k in 0..3 {
        gap = gap.max(bb.min[k] - hi[k]).max(lo[k] - bb.max[k]);
    }
    gap
}

/// Drops the object from rest and measures how far its centroid travels.
/// Semi-implicit Euler with sequential normal and friction impulses and a
/// translational projection out of penetration. Fully deterministic.
pub fn simulate_drop(scene: &RigidBodyScene, params: &SimulationParams) -> StabilityReport {
    let props = scene.properties;
    let mp = scene.object.mass_properties(props.mass);
    let body_vertices: Vec<Vec3> = scene.object.vertices().iter().map(|v| v - mp.centroid).collect();
    let body_planes: Vec<(Vec3, f64)> = scene
        .object
        .planes()
        .iter()
        .map(|(n, d)| (*n, d - n.dot(&mp.centroid)))
        .collect();
    let radius = body_vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let inv_mass = 1.0 / props.mass;
    let inv_inertia_body = mp.inertia.try_inverse().unwrap_or_else(Mat3::zeros);
    let dt = params.dt;
    let eps = params.contact_epsilon;

    let mut st = ObjectState {
        body_vertices: &body_vertices,
        body_planes: &body_planes,
        x: mp.centroid,
        r: Mat3::identity(),
    };
    let mut v = Vec3::zeros();
    let mut w = Vec3::zeros();

    for _ in 0..params.steps {
        v += scene.gravity * dt;
        let verts = st.world_vertices();
        let planes = st.world_planes();
        let inv_i = st.r * inv_inertia_body * st.r.transpose();
        let margin = eps + (v.norm() + w.norm() * radius) * dt;

        struct Row {
            r: Vec3,
            n: Vec3,
            t: [Vec3; 2],
            kn: f64,
            kt: [f64; 2],
            target: f64,
            mu: f64,
            grip: f64,
            jn: f64,
            jt: [f64; 2],
        }
        let eff = |r: &Vec3, d: &Vec3| inv_mass + d.dot(&(inv_i * r.cross(d)).cross(r));
        let mut rows = Vec::new();
        let moved = OnceCell::new();
        for s in &scene.statics {
            if bounds_gap(&verts, &s.hull) > margin {
                continue;
            }
            let mu = props.friction * s.friction;
            let e = props.restitution * s.restitution;
            for c in contacts_with(&verts, &planes, s, margin, Some(&moved), params.manifold_size) {
                let r = c.point - st.x;
                let n = c.normal;
                let t0 = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
                let t1 = n.cross(&t0).normalize();
                let t2 = n.cross(&t1);
                let vn0 = n.dot(&(v + w.cross(&r)));
                let target = if c.depth < 0.0 {
                    c.depth / dt
                } else if -vn0 > params.restitution_threshold {
                    -e * vn0
                } else {
                    0.0
                };
                rows.push(Row {
                    r,
                    n,
                    t: [t1, t2],
                    kn: eff(&r, &n),
                    kt: [eff(&r, &t1), eff(&r, &t2)],
                    target,
                    mu,
                    grip: params.grip_stiffness * c.depth.max(0.0) * dt,
                    jn: 0.0,
                    jt: [0.0; 2],
                });
            }
        }

        let apply = |v: &mut Vec3, w: &mut Vec3, r: &Vec3, j: Vec3| {
            *v += j * inv_mass;
            *w += inv_i * r.cross(&j);
        };
        for _ in 0..params.solver_iterations {
            for row in rows.iter_mut() {
                let vn = row.n.dot(&(v + w.cross(&row.r)));
                let jn = (row.jn + (row.target - vn) / row.kn).max(0.0);
                let dj = jn - row.jn;
                row.jn = jn;
                apply(&mut v, &mut w, &row.r, row.n * dj);

                let vrel = v + w.cross(&row.r);
                let mut jt = row.jt;
                for k in 0..2 {
                    jt[k] -= row.t[k].dot(&vrel) / row.kt[k];
                }
                let limit = row.mu * (row.jn + row.grip);
                let norm = (jt[0] * jt[0] + jt[1] * jt[1]).sqrt();
                if norm > limit {
                    let s = if norm > 0.0 { limit / norm } else { 0.0 };
                    jt = [jt[0] * s, jt[1] * s];
                }
                let d = row.t[0] * (jt[0] - row.jt[0]) + row.t[1] * (jt[1] - row.jt[1]);
                row.jt = jt;
                apply(&mut v, &mut w, &row.r, d);
            }
        }

        st.x += v * dt;
        st.r = so3_exp(&(w * dt)) * st.r;

        let verts = st.world_vertices();
        let planes = st.world_planes();
        let mut push = Vec3::zeros();
        let mut count = 0usize;
        for s in &scene.statics {
            if bounds_gap(&verts, &s.hull) > 0.0 {
                continue;
            }
            for c in contacts_with(&verts, &planes, s, 0.0, None, params.manifold_size) {
                if c.depth > 0.0 {
                    push += c.normal * c.depth;
                    count += 1;
                }
            }
        }
        if count > 0 {
            st.x += push / count as f64;
        }
    }

    let displacement = (st.x - mp.centroid).norm();
    StabilityReport {
        displacement,
        stable: displacement < params.stable_threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TriangleMesh;

    fn ball(center: Vec3) -> ConvexHull {
        ConvexHull::new(&TriangleMesh::icosphere(center, 30.0, 3).vertices).unwrap()
    }

    /// Ball turned so one face points straight down, lowest at `y = gap`.
    fn ball_on_face(gap: f64) -> ConvexHull {
        let h = ball(Vec3::zeros());
        let down = h.planes().iter().map(|(n, _)| *n).max_by(|a, b| (-a.y).total_cmp(&-b.y)).unwrap();
        let r = nalgebra::Rotation3::rotation_between(&down, &-Vec3::y()).unwrap();
        let pts: Vec<Vec3> = h.vertices().iter().map(|v| r * v).collect();
        let low = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        ConvexHull::new(&pts.iter().map(|p| p + Vec3::new(0.0, gap - low, 0.0)).collect::<Vec<_>>()).unwrap()
    }

    fn slab(center: Vec3, half: Vec3, friction: f64) -> StaticBody {
        StaticBody {
            name: "slab".into(),
            hull: ConvexHull::cuboid(center, half).unwrap(),
            friction,
            restitution: 0.0,
            part: None,
        }
    }

    fn scene(object: ConvexHull, statics: Vec<StaticBody>) -> RigidBodyScene {
        RigidBodyScene {
            object,
            properties: PhysicalProperties::default(),
            statics,
            gravity: Vec3::new(0.0, -9810.0, 0.0),
        }
    }

    #[test]
    fn free_fall_matches_closed_form() {
        let r = simulate_drop(&scene(ball(Vec3::zeros()), vec![]), &SimulationParams::default());
        let expected = 9810.0 * 0.01 * 630.0;
        assert!((r.displacement - expected).abs() / expected < 1e-9);
        assert!(!r.stable);
    }

    #[test]
    fn resting_on_ground() {
        let ground = slab(Vec3::new(0.0, -50.0, 0.0), Vec3::new(200.0, 50.0, 200.0), 3.0);
        let r = simulate_drop(&scene(ball_on_face(0.0), vec![ground]), &SimulationParams::default());
        assert!(r.stable, "{r:?}");
    }

    #[test]
    fn settles_after_small_gap() {
        let ground = slab(Vec3::new(0.0, -50.0, 0.0), Vec3::new(200.0, 50.0, 200.0), 3.0);
        let r = simulate_drop(&scene(ball_on_face(1.0), vec![ground]), &SimulationParams::default());
        assert!(r.stable, "{r:?}");
        assert!(r.displacement > 0.5);
    }

    #[test]
    fn pinched_between_plates() {
        let plates = vec![
            slab(Vec3::new(-34.0, 0.0, 0.0), Vec3::new(5.0, 40.0, 40.0), 1.2),
            slab(Vec3::new(34.0, 0.0, 0.0), Vec3::new(5.0, 40.0, 40.0), 1.2),
        ];
        let r = simulate_drop(&scene(ball(Vec3::zeros()), plates), &SimulationParams::default());
        assert!(r.stable, "{r:?}");
    }

    #[test]
    fn slides_off_an_edge() {
        let ledge = slab(Vec3::new(-200.0, -50.0, 0.0), Vec3::new(190.0, 50.0, 200.0), 3.0);
        let r = simulate_drop(&scene(ball(Vec3::new(0.0, 30.0, 0.0)), vec![ledge]), &SimulationParams::default());
        assert!(!r.stable, "{r:?}");
    }

    #[test]
    fn deterministic() {
        let ground = slab(Vec3::new(0.0, -50.0, 0.0), Vec3::new(200.0, 50.0, 200.0), 3.0);
        let s = scene(ball(Vec3::new(3.0, 30.2, 0.0)), vec![ground]);
        let a = simulate_drop(&s, &SimulationParams::default());
        let b = simulate_drop(&s, &SimulationParams::default());
        assert_eq!(a.displacement.to_bits(), b.displacement.to_bits());
    }
}
