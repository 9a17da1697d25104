//! Procedural test models: a capsule-segment hand and simple objects.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::kinematics::{Joint, Skeleton, SkinWeights, Vec3};
use crate::model::{Fingertip, Part, PhysicalProperties, SkinnedModel};

/// Accumulates skinned geometry bone by bone.
#[derive(Default)]
struct Builder {
    vertices: Vec<Vec3>,
    normals: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    weights: Vec<Vec<(usize, f64)>>,
}

impl Builder {
    fn push_surface(&mut self, rings: &[Vec<(Vec3, Vec3)>], poles: [Option<(Vec3, Vec3)>; 2], bone: usize) -> std::ops::Range<usize> {
        let start = self.vertices.len();
        let sides = rings[0].len();
        let add = |b: &mut Self, p: Vec3, n: Vec3| {
            b.vertices.push(p);
            b.normals.push(n.normalize());
            b.weights.push(vec![(bone, 1.0)]);
            b.vertices.len() - 1
        };
        let first_pole = poles[0].map(|(p, n)| add(self, p, n));
        let ring_ids: Vec<Vec<usize>> = rings
            .iter()
            .map(|r| r.iter().map(|&(p, n)| add(self, p, n)).collect())
            .collect();
        let last_pole = poles[1].map(|(p, n)| add(self, p, n));
        let mut tris = Vec::new();
        if let Some(p) = first_pole {
            for i in 0..sides {
                tris.push([p, ring_ids[0][(i + 1) % sides], ring_ids[0][i]]);
            }
        }
        for w in ring_ids.windows(2) {
            for i in 0..sides {
                let j = (i + 1) % sides;
                tris.push([w[0][i], w[0][j], w[1][j]]);
                tris.push([w[0][i], w[1][j], w[1][i]]);
            }
        }
        if let Some(p) = last_pole {
            let r = ring_ids.last().unwrap();
            for i in 0..sides {
                tris.push([p, r[i], r[(i + 1) % sides]]);
            }
        }
        // Orient every face along the analytic normals.
        for t in &mut tris {
            let [a, b, c] = t.map(|k| self.vertices[k]);
            let n: Vec3 = t.iter().map(|&k| self.normals[k]).sum();
            if (b - a).cross(&(c - a)).dot(&n) < 0.0 {
                t.swap(1, 2);
            }
        }
        self.triangles.extend(tris);
        start..self.vertices.len()
    }

    /// Capsule of `radius` from `a` along unit `dir` for `len`.
    fn capsule(&mut self, a: Vec3, dir: Vec3, len: f64, radius: f64, bone: usize) -> std::ops::Range<usize> {
        const SIDES: usize = 12;
        const CAP_RINGS: usize = 3;
        let (e1, e2) = frame(&dir);
        let ring = |center: Vec3, r: f64, axial: f64| -> Vec<(Vec3, Vec3)> {
            (0..SIDES)
                .map(|i| {
                    let phi = 2.0 * PI * i as f64 / SIDES as f64;
                    let radial = e1 * phi.cos() + e2 * phi.sin();
                    (center + radial * r, radial * (1.0 - axial * axial).sqrt() + dir * axial)
                })
                .collect()
        };
        let mut rings = Vec::new();
        for k in 1..CAP_RINGS {
            let ang = -FRAC_PI_2 + FRAC_PI_2 * k as f64 / CAP_RINGS as f64;
            rings.push(ring(a + dir * radius * ang.sin(), radius * ang.cos(), ang.sin()));
        }
        let segments = (len / 4.0).ceil().max(1.0) as usize;
        for s in 0..=segments {
            rings.push(ring(a + dir * (len * s as f64 / segments as f64), radius, 0.0));
        }
        let b = a + dir * len;
        for k in 1..CAP_RINGS {
            let ang = FRAC_PI_2 * k as f64 / CAP_RINGS as f64;
            rings.push(ring(b + dir * radius * ang.sin(), radius * ang.cos(), ang.sin()));
        }
        self.push_surface(
            &rings,
            [Some((a - dir * radius, -dir)), Some((b + dir * radius, dir))],
            bone,
        )
    }

    /// Superellipsoid `|x/a|^4 + |y/b|^4 + |z/c|^4 = 1` around `center`.
    fn superellipsoid(&mut self, center: Vec3, semi: Vec3, bone: usize) -> std::ops::Range<usize> {
        const SIDES: usize = 28;
        const RINGS: usize = 10;
        let spow = |x: f64| x.signum() * x.abs().sqrt();
        let normal = |p: Vec3| {
            let g = |x: f64, a: f64| 4.0 * (x / a).powi(3) / a;
            Vec3::new(g(p.x, semi.x), g(p.y, semi.y), g(p.z, semi.z))
        };
        let rings: Vec<Vec<(Vec3, Vec3)>> = (1..RINGS)
            .map(|k| {
                let eta = -FRAC_PI_2 + PI * k as f64 / RINGS as f64;
                (0..SIDES)
                    .map(|i| {
                        let om = 2.0 * PI * i as f64 / SIDES as f64;
                        let p = Vec3::new(
                            semi.x * spow(eta.cos()) * spow(om.cos()),
                            semi.y * spow(eta.cos()) * spow(om.sin()),
                            semi.z * spow(eta.sin()),
                        );
                        (center + p, normal(p))
                    })
                    .collect()
            })
            .collect();
        self.push_surface(
            &rings,
            [
                Some((center - Vec3::z() * semi.z, -Vec3::z())),
                Some((center + Vec3::z() * semi.z, Vec3::z())),
            ],
            bone,
        )
    }

    fn finish(self) -> Result<(TriangleMesh, SkinWeights)> {
        Ok((
            TriangleMesh::with_normals(self.vertices, self.triangles, self.normals)?,
            SkinWeights::new(self.weights),
        ))
    }
}

fn frame(dir: &Vec3) -> (Vec3, Vec3) {
    let helper = if dir.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = dir.cross(&helper).normalize();
    (e1, dir.cross(&e1))
}

#[derive(Clone, Copy, Debug)]
struct FingerSpec {
    name: &'static str,
    base: [f64; 2],
    /// Rest abduction: rotation of the `-y` finger direction about `z`.
    spread: f64,
    lengths: [f64; 3],
    radius: f64,
    cup: bool,
}

const FINGERS: [FingerSpec; 4] = [
    FingerSpec {
        name: "index",
        base: [28.0, -90.0],
        spread: 0.1,
        lengths: [45.0, 25.0, 20.0],
        radius: 8.0,
        cup: false,
    },
    FingerSpec {
        name: "middle",
        base: [9.5, -92.0],
        spread: 0.0,
        lengths: [50.0, 30.0, 22.0],
        radius: 8.0,
        cup: false,
    },
    FingerSpec {
        name: "ring",
        base: [-9.0, -90.0],
        spread: -0.1,
        lengths: [46.0, 28.0, 20.0],
        radius: 7.5,
        cup: true,
    },
    FingerSpec {
        name: "little",
        base: [-26.0, -84.0],
        spread: -0.22,
        lengths: [36.0, 21.0, 18.0],
        radius: 6.5,
        cup: true,
    },
];

/// Capsule-segment hand in its own model frame: the wrist sits at the
/// origin, fingers point along `-y`, and the palm faces `-z`. Flexion is
/// positive toward the palm side.
///
/// `fingers` counts the thumb plus the first `fingers - 1` of index,
/// middle, ring and little. Five fingers give 37 DoF.
pub fn procedural_hand(fingers: usize) -> Result<SkinnedModel> {
    if !(2..=5).contains(&fingers) {
        return Err(Error::Config(format!("hand needs 2 to 5 fingers, got {fingers}")));
    }
    let mut joints = vec![Joint::root("forearm")];
    let mut parts = vec![
        Part {
            name: "forearm".into(),
            support: false,
        },
        Part {
            name: "palm".into(),
            support: false,
        },
    ];
    let mut joint_part = vec![0];
    let mut b = Builder::default();
    let mut fingertips = Vec::new();
    let deg = |d: f64| d.to_radians();

    b.capsule(Vec3::new(0.0, 10.0, 0.0), Vec3::y(), 60.0, 22.0, 0);

    let add = |joints: &mut Vec<Joint>, joint_part: &mut Vec<usize>, j: Joint, part: usize| {
        joints.push(j);
        joint_part.push(part);
        joints.len() - 1
    };
    let wrist = Vec3::zeros();
    let mut parent = 0;
    for (name, axis, lim) in [
        ("wrist_flex", Vec3::x(), (deg(-70.0), deg(70.0))),
        ("wrist_deviation", Vec3::z(), (deg(-25.0), deg(30.0))),
        ("wrist_twist", -Vec3::y(), (deg(-40.0), deg(40.0))),
    ] {
        parent = add(&mut joints, &mut joint_part, Joint::revolute(name, parent, axis, wrist, lim), 1);
    }
    let palm = parent;
    b.superellipsoid(Vec3::new(0.0, -48.0, 0.0), Vec3::new(40.0, 46.0, 12.0), palm);

    for spec in FINGERS.iter().take(fingers - 1) {
        let base = Vec3::new(spec.base[0], spec.base[1], 0.0);
        let mut parent = palm;
        if spec.cup {
            // Ulnar metacarpals fold toward the palm about an axis through
            // the wrist side of the palm.
            let axis = (base - Vec3::new(spec.base[0] * 0.3, -10.0, 0.0)).normalize();
            parent = add(
                &mut joints,
                &mut joint_part,
                Joint::revolute(
                    format!("{}_cup", spec.name),
                    parent,
                    axis,
                    Vec3::new(spec.base[0] * 0.3, -10.0, 0.0),
                    (deg(-5.0), deg(25.0)),
                ),
                1,
            );
        }
        let dir = Vec3::new(spec.spread.sin(), -spec.spread.cos(), 0.0);
        let side = Vec3::z().cross(&dir);
        let p0 = parts.len();
        for seg in ["proximal", "middle", "distal"] {
            parts.push(Part {
                name: format!("{}_{seg}", spec.name),
                support: true,
            });
        }
        for (name, axis, lim) in [
            ("mcp_flex", side, (deg(-20.0), deg(90.0))),
            ("mcp_abduct", Vec3::z(), (deg(-20.0), deg(20.0))),
            ("mcp_twist", dir, (deg(-10.0), deg(10.0))),
        ] {
            parent = add(
                &mut joints,
                &mut joint_part,
                Joint::revolute(format!("{}_{name}", spec.name), parent, axis, base, lim),
                p0,
            );
        }
        let [l0, l1, l2] = spec.lengths;
        b.capsule(base, dir, l0, spec.radius, parent);
        let pip = base + dir * l0;
        parent = add(
            &mut joints,
            &mut joint_part,
            Joint::revolute(format!("{}_pip", spec.name), parent, side, pip, (deg(0.0), deg(105.0))),
            p0 + 1,
        );
        b.capsule(pip, dir, l1, spec.radius * 0.93, parent);
        let dip = pip + dir * l1;
        parent = add(
            &mut joints,
            &mut joint_part,
            Joint::revolute(format!("{}_dip", spec.name), parent, side, dip, (deg(0.0), deg(80.0))),
            p0 + 2,
        );
        let tip = b.capsule(dip, dir, l2, spec.radius * 0.86, parent);
        fingertips.push(Fingertip {
            name: spec.name.into(),
            vertices: tip.filter(|&v| (b.vertices[v] - dip).dot(&dir) >= 0.4 * l2).collect(),
        });
    }

    // Thumb: carpometacarpal, metacarpophalangeal and interphalangeal joints.
    let cmc = Vec3::new(30.0, -18.0, -2.0);
    let dir = Vec3::new(0.62, -0.77, -0.15).normalize();
    let flex_axis = Vec3::new(0.77, 0.62, 0.0).normalize();
    let abduct_axis = dir.cross(&flex_axis).normalize();
    let p0 = parts.len();
    for seg in ["metacarpal", "proximal", "distal"] {
        parts.push(Part {
            name: format!("thumb_{seg}"),
            support: seg != "metacarpal",
        });
    }
    let mut parent = palm;
    for (name, axis, lim) in [
        ("cmc_flex", flex_axis, (deg(-20.0), deg(50.0))),
        ("cmc_abduct", abduct_axis, (deg(-30.0), deg(40.0))),
        ("cmc_twist", dir, (deg(-30.0), deg(30.0))),
    ] {
        parent = add(
            &mut joints,
            &mut joint_part,
            Joint::revolute(format!("thumb_{name}"), parent, axis, cmc, lim),
            p0,
        );
    }
    b.capsule(cmc, dir, 40.0, 10.5, parent);
    let mcp = cmc + dir * 40.0;
    for (name, axis, lim) in [
        ("mcp_flex", flex_axis, (deg(-10.0), deg(70.0))),
        ("mcp_abduct", abduct_axis, (deg(-15.0), deg(15.0))),
    ] {
        parent = add(
            &mut joints,
            &mut joint_part,
            Joint::revolute(format!("thumb_{name}"), parent, axis, mcp, lim),
            p0 + 1,
        );
    }
    b.capsule(mcp, dir, 31.0, 9.0, parent);
    let ip = mcp + dir * 31.0;
    parent = add(
        &mut joints,
        &mut joint_part,
        Joint::revolute("thumb_ip", parent, flex_axis, ip, (deg(-15.0), deg(85.0))),
        p0 + 2,
    );
    let tip = b.capsule(ip, dir, 26.0, 8.5, parent);
    fingertips.insert(
        0,
        Fingertip {
            name: "thumb".into(),
            vertices: tip.filter(|&v| (b.vertices[v] - ip).dot(&dir) >= 0.4 * 26.0).collect(),
        },
    );

    let (mesh, weights) = b.finish()?;
    SkinnedModel::new(
        "hand",
        mesh,
        Skeleton::new(joints)?,
        weights,
        parts,
        joint_part,
        fingertips,
        vec![("hand".into(), None)],
    )
}

fn rigid_object(name: &str, mesh: TriangleMesh, props: PhysicalProperties) -> Result<SkinnedModel> {
    let n = mesh.vertices.len();
    SkinnedModel::new(
        name,
        mesh,
        Skeleton::new(vec![Joint::root(name)])?,
        SkinWeights::rigid(&vec![0; n]),
        vec![Part {
            name: name.into(),
            support: false,
        }],
        vec![0],
        vec![],
        vec![(name.into(), Some(props))],
    )
}

/// Rigid sphere centered at the model origin (6 DoF).
pub fn procedural_ball(radius: f64) -> Result<SkinnedModel> {
    rigid_object(
        "ball",
        TriangleMesh::icosphere(Vec3::zeros(), radius, 3),
        PhysicalProperties::default(),
    )
}

/// Axis-aligned box centered at the model origin with flat-shaded faces.
pub fn procedural_box(size: Vec3) -> Result<SkinnedModel> {
    let mut mesh = TriangleMesh::default();
    let h = size / 2.0;
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let n = Vec3::ith(axis, sign);
            let u = Vec3::ith((axis + 1) % 3, 1.0);
            let v = n.cross(&u);
            let (su, sv) = (size[(axis + 1) % 3], size[(axis + 2) % 3]);
            let origin = n.component_mul(&h) - u * (su / 2.0) - v * (sv / 2.0);
            let cells = |s: f64| (s / 8.0).ceil().max(1.0) as usize;
            mesh.append(&TriangleMesh::grid(origin, u * su, v * sv, cells(su), cells(sv)));
        }
    }
    rigid_object("box", mesh, PhysicalProperties::default())
}

/// Two rigid cylindrical halves of a pipe joined by a revolute joint about
/// `z` at the origin (7 DoF). Vertices near the joint blend both halves.
pub fn procedural_pipe(half_length: f64, radius: f64) -> Result<SkinnedModel> {
    const BLEND: f64 = 10.0;
    let mut b = Builder::default();
    b.capsule(Vec3::new(-half_length, 0.0, 0.0), Vec3::x(), 2.0 * half_length, radius, 0);
    let weights = b
        .vertices
        .iter()
        .map(|v| {
            let w = ((v.x + BLEND) / (2.0 * BLEND)).clamp(0.0, 1.0);
            if w == 0.0 {
                vec![(0, 1.0)]
            } else if w == 1.0 {
                vec![(1, 1.0)]
            } else {
                vec![(0, 1.0 - w), (1, w)]
            }
        })
        .collect();
    b.weights = weights;
    let (mesh, weights) = b.finish()?;
    let skeleton = Skeleton::new(vec![
        Joint::root("pipe"),
        Joint::revolute("bend", 0, Vec3::z(), Vec3::zeros(), (-FRAC_PI_2, FRAC_PI_2)),
    ])?;
    SkinnedModel::new(
        "pipe",
        mesh,
        skeleton,
        weights,
        vec![
            Part {
                name: "left".into(),
                support: false,
            },
            Part {
                name: "right".into(),
                support: false,
            },
        ],
        vec![0, 1],
        vec![],
        vec![("pipe".into(), Some(PhysicalProperties::default()))],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::find_collisions;
    use crate::kinematics::{JacobianMode, Pose};

    #[test]
    fn hand_has_37_dof() {
        let h = procedural_hand(5).unwrap();
        assert_eq!(h.dof_count(), 37);
        assert_eq!(h.skeleton.revolute_joints().count(), 31);
        assert_eq!(h.fingertips.len(), 5);
        assert!(h.mesh.volume() > 0.0);
    }

    #[test]
    fn smaller_hands() {
        assert_eq!(procedural_hand(2).unwrap().dof_count(), 6 + 3 + 6 + 5);
        assert!(procedural_hand(1).is_err());
    }

    #[test]
    fn objects() {
        assert_eq!(procedural_ball(30.0).unwrap().dof_count(), 6);
        let b = procedural_box(Vec3::new(40.0, 60.0, 80.0)).unwrap();
        assert!((b.mesh.volume() - 40.0 * 60.0 * 80.0).abs() < 1e-6);
        assert_eq!(procedural_pipe(80.0, 12.0).unwrap().dof_count(), 7);
    }

    #[test]
    fn rest_hand_is_collision_free() {
        let h = procedural_hand(5).unwrap();
        let posed = h.pose(&Pose::zeros(&h.skeleton), JacobianMode::Local).unwrap();
        assert!(find_collisions(&h, &posed.vertices).is_empty());
    }
}
