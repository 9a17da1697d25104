use crate::error::{Error, Result};
use crate::kinematics::{RigidTransform, Vec3};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Vec<Vec3>,
}

impl TriangleMesh {
    /// Builds a mesh with area-weighted vertex normals.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = Self {
            vertices,
            triangles,
            normals: Vec::new(),
        };
        mesh.check_indices()?;
        mesh.normals = mesh.area_weighted_normals();
        Ok(mesh)
    }

    pub fn with_normals(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, normals: Vec<Vec3>) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            normals,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn check_indices(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some((i, _)) = self.triangles.iter().enumerate().find(|(_, t)| t.iter().any(|&k| k >= n)) {
            return Err(Error::InvalidMesh(format!("triangle {i} references a missing vertex")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_indices()?;
        if self.normals.len() != self.vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} normals for {} vertices",
                self.normals.len(),
                self.vertices.len()
            )));
        }
        if let Some(i) = self.normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::InvalidMesh(format!("normal {i} is not unit length")));
        }
        Ok(())
    }

    pub fn area_weighted_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|k| self.vertices[k]);
            let n = (b - a).cross(&(c - a));
            for &k in t {
                acc[k] += n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vec3::z()
                }
            })
            .collect()
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangles[face].map(|k| self.vertices[k]);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| t.transform_point(v)).collect(),
            triangles: self.triangles.clone(),
            normals: self.normals.iter().map(|n| t.transform_vector(n)).collect(),
        }
    }

    /// Appends `other`, offsetting its indices.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.normals.extend_from_slice(&other.normals);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|k| k + base)));
    }

    /// Signed volume of a closed, outward-oriented mesh.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|k| self.vertices[k]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Subdivided icosahedron of the given radius around `center`.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> Self {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, p, 0.0),
            (1.0, p, 0.0),
            (-1.0, -p, 0.0),
            (1.0, -p, 0.0),
            (0.0, -1.0, p),
            (0.0, 1.0, p),
            (0.0, -1.0, -p),
            (0.0, 1.0, -p),
            (p, 0.0, -1.0),
            (p, 0.0, 1.0),
            (-p, 0.0, -1.0),
            (-p, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut tris: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut cache = std::collections::HashMap::new();
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
                let key = (a.min(b), a.max(b));
                *cache.entry(key).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(tris.len() * 4);
            for [a, b, c] in tris {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            tris = next;
        }
        let normals = verts.clone();
        Self {
            vertices: verts.iter().map(|v| center + v * radius).collect(),
            triangles: tris,
            normals,
        }
    }

    /// Regular grid of `(nx+1) x (ny+1)` vertices spanning `origin + [0,1]^2`
    /// of the two edge vectors, normals along `u x v`.
    pub fn grid(origin: Vec3, u: Vec3, v: Vec3, nx: usize, ny: usize) -> Self {
        let mut vertices = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(origin + u * (i as f64 / nx as f64) + v * (j as f64 / ny as f64));
            }
        }
        let mut triangles = Vec::new();
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let n = u.cross(&v).normalize();
        let normals = vec![n; vertices.len()];
        Self {
            vertices,
            triangles,
            normals,
        }
    }
}
