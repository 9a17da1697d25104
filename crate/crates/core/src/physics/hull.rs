use std::collections::HashMap;

use crate::collision::Aabb;
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::kinematics::{Mat3, Vec3};

/// Closed convex polytope with outward-facing triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexHull {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    /// Unit outward normal `n` and offset `d` with `n . x = d` on the face.
    planes: Vec<(Vec3, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassProperties {
    pub volume: f64,
    pub centroid: Vec3,
    /// Inertia tensor about the centroid for the given mass.
    pub inertia: Mat3,
}

struct Face {
    v: [usize; 3],
    n: Vec3,
    d: f64,
    alive: bool,
}

fn plane(a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, f64) {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    let n = if len > 0.0 { n / len } else { n };
    (n, n.dot(a))
}

fn first_extreme(n: usize, key: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    for i in 1..n {
        if key(i) > key(best) {
            best = i;
        }
    }
    best
}

impl ConvexHull {
    /// Incremental hull. Points are inserted in input order and the output
    /// keeps hull vertices in input order.
    pub fn new(points: &[Vec3]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::DegenerateHull("fewer than four points"));
        }
        if points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::DegenerateHull("non-finite point"));
        }
        let mut bb = Aabb::empty();
        points.iter().for_each(|p| bb.grow(p));
        let extent = (bb.max - bb.min).norm();
        let eps = 1e-10 * extent;
        if extent == 0.0 {
            return Err(Error::DegenerateHull("coincident points"));
        }
        let n = points.len();
        let i0 = first_extreme(n, |i| -points[i].x);
        let i1 = first_extreme(n, |i| (points[i] - points[i0]).norm());
        let axis = (points[i1] - points[i0]).normalize();
        let line_dist = |i: usize| {
            let d = points[i] - points[i0];
            (d - axis * d.dot(&axis)).norm()
        };
        let i2 = first_extreme(n, line_dist);
        if line_dist(i2) <= eps {
            return Err(Error::DegenerateHull("collinear points"));
        }
        let (pn, pd) = plane(&points[i0], &points[i1], &points[i2]);
        let i3 = first_extreme(n, |i| (pn.dot(&points[i]) - pd).abs());
        if (pn.dot(&points[i3]) - pd).abs() <= eps {
            return Err(Error::DegenerateHull("coplanar points"));
        }

        let interior = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
        let mut faces: Vec<Face> = Vec::new();
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        let add_face = |faces: &mut Vec<Face>, edges: &mut HashMap<(usize, usize), usize>, v: [usize; 3]| {
            let (n, d) = plane(&points[v[0]], &points[v[1]], &points[v[2]]);
            let id = faces.len();
            for k in 0..3 {
                edges.insert((v[k], v[(k + 1) % 3]), id);
            }
            faces.push(Face { v, n, d, alive: true });
        };
        for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
            let (n, d) = plane(&points[tri[0]], &points[tri[1]], &points[tri[2]]);
            let tri = if n.dot(&interior) - d > 0.0 { [tri[0], tri[2], tri[1]] } else { tri };
            add_face(&mut faces, &mut edges, tri);
        }

        let seeds = [i0, i1, i2, i3];
        for p in (0..n).filter(|i| !seeds.contains(i)) {
            let q = points[p];
            let visible: Vec<usize> = (0..faces.len())
                .filter(|&f| faces[f].alive && faces[f].n.dot(&q) - faces[f].d > eps)
                .collect();
            if visible.is_empty() {
                continue;
            }
            let mut horizon = Vec::new();
            for &f in &visible {
                let v = faces[f].v;
                for k in 0..3 {
                    let (a, b) = (v[k], v[(k + 1) % 3]);
                    let twin = edges[&(b, a)];
                    if !visible.contains(&twin) {
                        horizon.push((a, b));
                    }
                }
            }
            for &f in &visible {
                faces[f].alive = false;
                let v = faces[f].v;
                for k in 0..3 {
                    edges.remove(&(v[k], v[(k + 1) % 3]));
                }
            }
            for (a, b) in horizon {
                add_face(&mut faces, &mut edges, [a, b, p]);
            }
        }

        let mut used: Vec<usize> = faces.iter().filter(|f| f.alive).flat_map(|f| f.v).collect();
        used.sort_unstable();
        used.dedup();
        let mut remap = vec![usize::MAX; n];
        for (new, &old) in used.iter().enumerate() {
            remap[old] = new;
        }
        let live: Vec<&Face> = faces.iter().filter(|f| f.alive).collect();
        Ok(Self {
            vertices: used.iter().map(|&i| points[i]).collect(),
            triangles: live.iter().map(|f| f.v.map(|i| remap[i])).collect(),
            planes: live.iter().map(|f| (f.n, f.d)).collect(),
        })
    }

    /// Axis-aligned box hull.
    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Result<Self> {
        let mut pts = Vec::with_capacity(8);
        for k in 0..8 {
            let s = Vec3::new(
                if k & 1 == 0 { -1.0 } else { 1.0 },
                if k & 2 == 0 { -1.0 } else { 1.0 },
                if k & 4 == 0 { -1.0 } else { 1.0 },
            );
            pts.push(center + half_extents.component_mul(&s));
        }
        Self::new(&pts)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn planes(&self) -> &[(Vec3, f64)] {
        &self.planes
    }

    /// Largest plane distance: negative inside, zero on the boundary, and a
    /// lower bound on the Euclidean distance outside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.planes.iter().map(|(n, d)| n.dot(p) - d).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Face attaining [`ConvexHull::signed_distance`], lowest index on ties.
    pub fn nearest_face(&self, p: &Vec3) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (n, d)) in self.planes.iter().enumerate() {
            let s = n.dot(p) - d;
            if s > best.1 {
                best = (i, s);
            }
        }
        best
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.signed_distance(p) <= tol
    }

    /// Vertex maximizing `dir . v`, lowest index on ties.
    pub fn support(&self, dir: &Vec3) -> Vec3 {
        self.vertices[first_extreme(self.vertices.len(), |i| dir.dot(&self.vertices[i]))]
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        self.vertices.iter().for_each(|p| b.grow(p));
        b
    }

    pub fn translated(&self, t: &Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + t).collect(),
            triangles: self.triangles.clone(),
            planes: self.planes.iter().map(|(n, d)| (*n, d + n.dot(t))).collect(),
        }
    }

    pub fn mesh(&self) -> Result<TriangleMesh> {
        TriangleMesh::new(self.vertices.clone(), self.triangles.clone())
    }

    pub fn volume(&self) -> f64 {
        self.mass_properties(1.0).volume
    }

    /// Uniform-density mass properties by tetrahedral decomposition.
    pub fn mass_properties(&self, mass: f64) -> MassProperties {
        let r = self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64;
        let mut volume = 0.0;
        let mut first = Vec3::zeros();
        let mut second = Mat3::zeros();
        for t in &self.triangles {
            let [a, b, c] = t.map(|k| self.vertices[k] - r);
            let det = a.dot(&b.cross(&c));
            let s = a + b + c;
            volume += det / 6.0;
            first += det / 24.0 * s;
            second += det / 120.0 * (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose());
        }
        let c = first / volume;
        let cov = second - volume * c * c.transpose();
        let inertia = (Mat3::identity() * cov.trace() - cov) * (mass / volume);
        MassProperties {
            volume,
            centroid: c + r,
            inertia,
        }
    }
}
