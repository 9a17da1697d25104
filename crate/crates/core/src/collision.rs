//! Triangle collision detection and the conic repulsion field.
//!
//! Colliding triangle pairs are found with a bounding volume hierarchy and an
//! exact edge/triangle crossing test. Each vertex of a colliding triangle is
//! pushed back along its inverse normal with an intensity given by the cone
//! field `Psi` of the opposing triangle.

use crate::kinematics::Vec3;
use crate::model::{PosedModel, SkinnedModel};

/// Default field-of-view parameter of the repulsion cone.
pub const DEFAULT_SIGMA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn of_triangle(t: &[Vec3; 3]) -> Self {
        let mut b = Self::empty();
        t.iter().for_each(|p| b.grow(p));
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= o.max[k] && o.min[k] <= self.max[k])
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= o.min[k] && o.max[k] <= self.max[k])
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Median-split hierarchy over triangle boxes, leaf size 4.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Item ids in leaf order.
    items: Vec<usize>,
    boxes: Vec<Aabb>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    /// `ids` are caller-chosen item identifiers, one per box.
    pub fn build(boxes: Vec<Aabb>, ids: Vec<usize>) -> Self {
        assert_eq!(boxes.len(), ids.len());
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        let mut nodes = Vec::new();
        if !boxes.is_empty() {
            build_node(&boxes, &mut order, 0, boxes.len(), &mut nodes);
        }
        let items = order.iter().map(|&k| ids[k]).collect();
        let boxes = order.iter().map(|&k| boxes[k]).collect();
        Self { nodes, items, boxes }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_bounds(&self) -> Option<Aabb> {
        self.nodes.first().map(|n| *n.bounds())
    }

    /// Every box is contained in the bounds of each of its ancestors.
    pub fn check_containment(&self) -> bool {
        fn walk(b: &Bvh, n: usize, chain: &mut Vec<Aabb>) -> bool {
            let node = &b.nodes[n];
            chain.push(*node.bounds());
            let ok = match *node {
                Node::Leaf { start, end, .. } => (start..end).all(|i| chain.iter().all(|a| a.contains(&b.boxes[i]))),
                Node::Inner { left, right, .. } => walk(b, left, chain) && walk(b, right, chain),
            };
            chain.pop();
            ok
        }
        self.is_empty() || walk(self, 0, &mut Vec::new())
    }

    /// Items whose boxes overlap `q`.
    pub fn query(&self, q: &Aabb, out: &mut Vec<usize>) {
        if self.is_empty() {
            return;
        }
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bounds().overlaps(q) {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    out.extend((start..end).filter(|&i| self.boxes[i].overlaps(q)).map(|i| self.items[i]))
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }
}

fn build_node(boxes: &[Aabb], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let bounds = order[start..end]
        .iter()
        .fold(Aabb::empty(), |acc, &k| acc.union(&boxes[k]));
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return id;
    }
    nodes.push(Node::Leaf { bounds, start, end });
    let extent = bounds.max - bounds.min;
    let axis = extent.imax();
    let centroid = |k: usize| boxes[k].min[axis] + boxes[k].max[axis];
    order[start..end].sort_by(|&a, &b| centroid(a).total_cmp(&centroid(b)).then(a.cmp(&b)));
    let mid = start + (end - start) / 2;
    let left = build_node(boxes, order, start, mid, nodes);
    let right = build_node(boxes, order, mid, end, nodes);
    nodes[id] = Node::Inner { bounds, left, right };
    id
}

fn orient(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a))
}

/// Whether segment `pq` crosses triangle `t`. Segments lying in the
/// triangle's plane do not count.
pub fn segment_hits_triangle(p: &Vec3, q: &Vec3, t: &[Vec3; 3]) -> bool {
    let dp = orient(&t[0], &t[1], &t[2], p);
    let dq = orient(&t[0], &t[1], &t[2], q);
    if (dp > 0.0 && dq > 0.0) || (dp < 0.0 && dq < 0.0) || (dp == 0.0 && dq == 0.0) {
        return false;
    }
    let e = [
        orient(p, q, &t[0], &t[1]),
        orient(p, q, &t[1], &t[2]),
        orient(p, q, &t[2], &t[0]),
    ];
    (e.iter().all(|&x| x >= 0.0) || e.iter().all(|&x| x <= 0.0)) && e.iter().any(|&x| x != 0.0)
}

/// Exact intersection test: some edge of one triangle crosses the other.
pub fn triangles_intersect(a: &[Vec3; 3], b: &[Vec3; 3]) -> bool {
    let edges = |t: &[Vec3; 3], o: &[Vec3; 3]| (0..3).any(|i| segment_hits_triangle(&t[i], &t[(i + 1) % 3], o));
    edges(a, b) || edges(b, a)
}

/// Pair of intersecting faces `(s, t)` with `s < t` for a single model, or
/// `(face of first mesh, face of second mesh)` for two meshes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CollisionPair {
    pub s: usize,
    pub t: usize,
}

fn tri(vertices: &[Vec3], f: &[usize; 3]) -> [Vec3; 3] {
    f.map(|k| vertices[k])
}

/// Intersecting face pairs between two separate meshes, sorted.
pub fn find_mesh_collisions(
    va: &[Vec3],
    ta: &[[usize; 3]],
    vb: &[Vec3],
    tb: &[[usize; 3]],
) -> Vec<CollisionPair> {
    let bvh = Bvh::build(tb.iter().map(|f| Aabb::of_triangle(&tri(vb, f))).collect(), (0..tb.len()).collect());
    let mut out = Vec::new();
    let mut hits = Vec::new();
    for (s, f) in ta.iter().enumerate() {
        let a = tri(va, f);
        hits.clear();
        bvh.query(&Aabb::of_triangle(&a), &mut hits);
        hits.sort_unstable();
        out.extend(
            hits.iter()
                .filter(|&&t| triangles_intersect(&a, &tri(vb, &tb[t])))
                .map(|&t| CollisionPair { s, t }),
        );
    }
    out
}

/// Faces that may not collide: faces of one body sharing a vertex or lying
/// on the same or directly connected parts.
pub fn excluded_pair(model: &SkinnedModel, s: usize, t: usize) -> bool {
    let (fs, ft) = (&model.mesh.triangles[s], &model.mesh.triangles[t]);
    if model.vertex_body(fs[0]) != model.vertex_body(ft[0]) {
        return false;
    }
    fs.iter().any(|v| ft.contains(v)) || model.parts_adjacent(model.vertex_part(fs[0]), model.vertex_part(ft[0]))
}

/// All intersecting, non-excluded face pairs of a posed model, sorted.
pub fn find_collisions(model: &SkinnedModel, vertices: &[Vec3]) -> Vec<CollisionPair> {
    let tris = &model.mesh.triangles;
    let boxes: Vec<Aabb> = tris.iter().map(|f| Aabb::of_triangle(&tri(vertices, f))).collect();
    let bvh = Bvh::build(boxes.clone(), (0..tris.len()).collect());
    let mut out = Vec::new();
    let mut hits = Vec::new();
    for s in 0..tris.len() {
        hits.clear();
        bvh.query(&boxes[s], &mut hits);
        hits.sort_unstable();
        let a = tri(vertices, &tris[s]);
        for &t in hits.iter().filter(|&&t| t > s) {
            if !excluded_pair(model, s, t) && triangles_intersect(&a, &tri(vertices, &tris[t])) {
                out.push(CollisionPair { s, t });
            }
        }
    }
    out
}

/// Right circular cone attached to a triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleCone {
    /// Circumcenter.
    pub o: Vec3,
    /// Unit face normal.
    pub n: Vec3,
    /// Circumradius.
    pub r: f64,
    pub sigma: f64,
}

impl TriangleCone {
    /// `None` for degenerate triangles.
    pub fn from_triangle(t: &[Vec3; 3], sigma: f64) -> Option<Self> {
        let ab = t[1] - t[0];
        let ac = t[2] - t[0];
        let cr = ab.cross(&ac);
        let den = 2.0 * cr.norm_squared();
        if den == 0.0 || !den.is_finite() {
            return None;
        }
        let off = (ac.norm_squared() * cr.cross(&ab) + ab.norm_squared() * ac.cross(&cr)) / den;
        Some(Self {
            o: t[0] + off,
            n: cr.normalize(),
            r: off.norm(),
            sigma,
        })
    }

    /// Normalized lateral distance from the cone axis; `+inf` where the
    /// cone radius is not positive.
    pub fn phi(&self, v: &Vec3) -> f64 {
        let d = v - self.o;
        let x = self.n.dot(&d);
        let lateral = (d - x * self.n).norm();
        let den = -(self.r / self.sigma) * x + self.r;
        if den <= 0.0 {
            return f64::INFINITY;
        }
        lateral / den
    }

    pub fn psi(&self, v: &Vec3) -> f64 {
        let phi = self.phi(v);
        if phi >= 1.0 {
            return 0.0;
        }
        let x = self.n.dot(&(v - self.o));
        let a = (1.0 - phi) * upsilon(x, self.sigma);
        a * a
    }
}

/// Repulsion intensity along the cone axis: linear beyond `-sigma`,
/// quadratic on `(-sigma, sigma)`, zero beyond `sigma`.
pub fn upsilon(x: f64, sigma: f64) -> f64 {
    if x <= -sigma {
        -x + 1.0 - sigma
    } else if x < sigma {
        -(1.0 - 2.0 * sigma) / (4.0 * sigma * sigma) * x * x - x / (2.0 * sigma) + 0.25 * (3.0 - 2.0 * sigma)
    } else {
        0.0
    }
}

/// One pushed vertex: vertex `vertex` penetrating the field of `face`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Repulsion {
    pub vertex: usize,
    pub face: usize,
    /// Field intensity at the vertex.
    pub psi: f64,
    /// Posed vertex normal at generation time.
    pub normal: Vec3,
    /// Target `v - psi n`.
    pub target: Vec3,
}

/// Repulsions of every vertex of each colliding face against the other face's
/// field, in pair order. Vertices with zero intensity are omitted.
pub fn collision_correspondences(pairs: &[CollisionPair], model: &SkinnedModel, posed: &PosedModel, sigma: f64) -> Vec<Repulsion> {
    let tris = &model.mesh.triangles;
    let mut out = Vec::new();
    for p in pairs {
        for (own, other) in [(p.t, p.s), (p.s, p.t)] {
            let Some(cone) = TriangleCone::from_triangle(&tri(&posed.vertices, &tris[other]), sigma) else {
                continue;
            };
            for &v in &tris[own] {
                let psi = cone.psi(&posed.vertices[v]);
                if psi > 0.0 {
                    let n = posed.normals[v];
                    out.push(Repulsion {
                        vertex: v,
                        face: other,
                        psi,
                        normal: n,
                        target: posed.vertices[v] - psi * n,
                    });
                }
            }
        }
    }
    out
}

/// Largest field intensity over all vertices of colliding faces.
pub fn max_penetration(model: &SkinnedModel, posed: &PosedModel, sigma: f64) -> f64 {
    let pairs = find_collisions(model, &posed.vertices);
    collision_correspondences(&pairs, model, posed, sigma)
        .iter()
        .map(|r| r.psi)
        .fold(0.0, f64::max)
}
