//! Alignment energies between the posed model and the observed depth:
//! closest-point model-to-data terms and depth-discontinuity data-to-model
//! line terms.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{pixel_ray, DepthFrame, DistanceTransform, NearestNeighborIndex, PluckerLine, PointCloud, Rendering};
use crate::kinematics::{skew, Vec3};
use crate::model::{PosedModel, SkinnedModel};
use crate::solver::ResidualSystem;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "p2p")]
    PointToPoint,
    #[default]
    #[serde(rename = "p2plane")]
    PointToPlane,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatingParams {
    /// Degrees between model and data normals.
    pub max_normal_angle: f64,
    /// mm
    pub max_dist_m2d: f64,
    /// mm
    pub max_dist_d2m: f64,
    /// Half-size of the window averaging observed edge depth (1 gives 3x3).
    pub edge_depth_radius: usize,
    /// Depth jump marking a discontinuity, mm.
    pub edge_jump: f64,
    /// Pixels between a model edge pixel and its associated vertex.
    pub edge_vertex_radius: f64,
}

impl Default for GatingParams {
    fn default() -> Self {
        Self {
            max_normal_angle: 45.0,
            max_dist_m2d: 10.0,
            max_dist_d2m: 30.0,
            edge_depth_radius: 1,
            edge_jump: 20.0,
            edge_vertex_radius: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointCorrespondence {
    pub vertex: usize,
    pub target: Vec3,
    /// Normal at the target. Point-to-plane rows use the model normal, this
    /// one only gates.
    pub target_normal: Vec3,
    pub metric: Metric,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineCorrespondence {
    pub vertex: usize,
    pub line: PluckerLine,
    /// Observed edge pixel the line passes through.
    pub pixel: usize,
}

/// Closest cloud point for every visible vertex, gated by distance and
/// normal angle. Output is ordered by vertex.
pub fn model_to_data(
    posed: &PosedModel,
    visible: &[bool],
    cloud: &PointCloud,
    index: &NearestNeighborIndex,
    gating: &GatingParams,
    metric: Metric,
) -> Vec<PointCorrespondence> {
    let cos_max = gating.max_normal_angle.to_radians().cos();
    (0..posed.vertices.len())
        .filter(|&v| visible[v])
        .filter_map(|v| {
            let (i, _) = index.query(&posed.vertices[v], gating.max_dist_m2d)?;
            let n = cloud.normals[i];
            (posed.normals[v].dot(&n) >= cos_max).then_some(PointCorrespondence {
                vertex: v,
                target: cloud.points[i],
                target_normal: n,
                metric,
            })
        })
        .collect()
}

/// Visible vertices bucketed by the pixel they project to.
struct VertexPixels<'a> {
    posed: &'a PosedModel,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    projected: Vec<(f64, f64)>,
}

impl<'a> VertexPixels<'a> {
    fn new(posed: &'a PosedModel, visible: &[bool], frame: &DepthFrame) -> Self {
        let k = &frame.intrinsics;
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let projected: Vec<(f64, f64)> = posed.vertices.iter().map(|v| k.project(v)).collect();
        for (v, &(u, w)) in projected.iter().enumerate() {
            if visible[v] {
                buckets.entry((u.round() as i64, w.round() as i64)).or_default().push(v);
            }
        }
        Self {
            posed,
            buckets,
            projected,
        }
    }

    /// Nearest projected vertex to pixel `(x, y)` within `radius`; ties go to
    /// the lower vertex id.
    fn nearest(&self, x: i64, y: i64, radius: f64) -> Option<usize> {
        let r = radius.ceil() as i64 + 1;
        let mut best: Option<(f64, usize)> = None;
        for yy in y - r..=y + r {
            for xx in x - r..=x + r {
                let Some(ids) = self.buckets.get(&(xx, yy)) else {
                    continue;
                };
                for &v in ids {
                    let (u, w) = self.projected[v];
                    let d = ((u - x as f64).powi(2) + (w - y as f64).powi(2)).sqrt();
                    if d <= radius && best.is_none_or(|(bd, bv)| d < bd || (d == bd && v < bv)) {
                        best = Some((d, v));
                    }
                }
            }
        }
        debug_assert!(best.is_none_or(|(_, v)| v < self.posed.vertices.len()));
        best.map(|(_, v)| v)
    }
}

/// Line correspondences from observed depth discontinuities to the model
/// silhouette. Each observed edge pixel is matched to the nearest rendered
/// model edge pixel and from there to the nearest visible projected vertex.
/// Output is ordered by observed pixel.
pub fn data_to_model(
    observed: &DepthFrame,
    observed_edges: &[bool],
    rendering: &Rendering,
    model_edge_dt: Option<&DistanceTransform>,
    posed: &PosedModel,
    gating: &GatingParams,
) -> Vec<LineCorrespondence> {
    let Some(dt) = model_edge_dt else {
        return Vec::new();
    };
    let k = &observed.intrinsics;
    let (w, h) = (observed.width() as i64, observed.height() as i64);
    let vertices = VertexPixels::new(posed, &rendering.visible, observed);
    let mut assoc: HashMap<usize, Option<usize>> = HashMap::new();
    let rad = gating.edge_depth_radius as i64;
    let mut out = Vec::new();
    for (p, _) in observed_edges.iter().enumerate().filter(|(_, &e)| e) {
        let e = dt.nearest(p);
        let vertex = *assoc.entry(e).or_insert_with(|| {
            vertices.nearest((e % dt.width()) as i64, (e / dt.width()) as i64, gating.edge_vertex_radius)
        });
        let Some(vertex) = vertex else {
            continue;
        };
        let (x, y) = ((p as i64) % w, (p as i64) / w);
        let (mut sum, mut n) = (0.0, 0usize);
        for yy in (y - rad).max(0)..=(y + rad).min(h - 1) {
            for xx in (x - rad).max(0)..=(x + rad).min(w - 1) {
                if let Some(d) = observed.valid_depth((yy * w + xx) as usize) {
                    sum += d;
                    n += 1;
                }
            }
        }
        if n == 0 {
            continue;
        }
        let point = k.back_project(x as f64, y as f64, sum / n as f64);
        if (posed.vertices[vertex] - point).norm() > gating.max_dist_d2m {
            continue;
        }
        out.push(LineCorrespondence {
            vertex,
            line: pixel_ray(x as f64, y as f64, k),
            pixel: p,
        });
    }
    out
}

pub fn residual_point(c: &PointCorrespondence, v: &Vec3) -> Vec3 {
    v - c.target
}

/// `n^T (v - X)` with the model normal `n`.
pub fn residual_plane(c: &PointCorrespondence, v: &Vec3, n: &Vec3) -> f64 {
    n.dot(&(v - c.target))
}

pub fn residual_line(c: &LineCorrespondence, v: &Vec3) -> Vec3 {
    c.line.residual(v)
}

/// Three rows `scale (v - target)`.
pub fn push_point_rows(sys: &mut ResidualSystem, model: &SkinnedModel, posed: &PosedModel, vertex: usize, target: &Vec3, scale: f64) {
    let jac = posed
        .state
        .point_jacobian(model.weights.row(vertex), &model.mesh.vertices[vertex]);
    sys.push_vec3(scale, &(posed.vertices[vertex] - target), &jac, None);
}

/// One row `scale n^T (v - target)`. A fixed `normal` is treated as
/// constant; otherwise the posed model normal and its derivative are used.
pub fn push_plane_row(
    sys: &mut ResidualSystem,
    model: &SkinnedModel,
    posed: &PosedModel,
    vertex: usize,
    target: &Vec3,
    normal: Option<&Vec3>,
    scale: f64,
) {
    let row = model.weights.row(vertex);
    let v0 = &model.mesh.vertices[vertex];
    let diff = posed.vertices[vertex] - target;
    let jv = posed.state.point_jacobian(row, v0);
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(jv.len());
    let n = match normal {
        Some(n) => *n,
        None => posed.normals[vertex],
    };
    for (c, col) in &jv {
        entries.push((*c, scale * n.dot(col)));
    }
    if normal.is_none() {
        for (c, col) in posed.state.normal_jacobian(row, &model.mesh.normals[vertex]) {
            let x = scale * diff.dot(&col);
            match entries.iter_mut().find(|e| e.0 == c) {
                Some(e) => e.1 += x,
                None => entries.push((c, x)),
            }
        }
    }
    sys.push(scale * n.dot(&diff), entries);
}

/// Rows for a model-to-data or salient correspondence according to its metric.
pub fn push_correspondence(sys: &mut ResidualSystem, model: &SkinnedModel, posed: &PosedModel, c: &PointCorrespondence, scale: f64) {
    match c.metric {
        Metric::PointToPoint => push_point_rows(sys, model, posed, c.vertex, &c.target, scale),
        Metric::PointToPlane => push_plane_row(sys, model, posed, c.vertex, &c.target, None, scale),
    }
}

/// Three rows `scale (v x d - m)`.
pub fn push_line_rows(sys: &mut ResidualSystem, model: &SkinnedModel, posed: &PosedModel, c: &LineCorrespondence, scale: f64) {
    let jac = posed
        .state
        .point_jacobian(model.weights.row(c.vertex), &model.mesh.vertices[c.vertex]);
    let m = -skew(&c.line.d);
    sys.push_vec3(scale, &residual_line(c, &posed.vertices[c.vertex]), &jac, Some(&m));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(target: Vec3) -> PointCorrespondence {
        PointCorrespondence {
            vertex: 0,
            target,
            target_normal: Vec3::x(),
            metric: Metric::PointToPlane,
        }
    }

    #[test]
    fn zero_residuals_on_target() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        let c = corr(v);
        assert_eq!(residual_point(&c, &v), Vec3::zeros());
        assert_eq!(residual_plane(&c, &v, &Vec3::x()), 0.0);
        let l = LineCorrespondence {
            vertex: 0,
            line: PluckerLine::through(&v, &Vec3::new(0.3, 0.2, 1.0)),
            pixel: 0,
        };
        assert!(residual_line(&l, &v).norm() < 1e-12);
    }

    #[test]
    fn plane_projection() {
        let c = corr(Vec3::zeros());
        assert_eq!(residual_plane(&c, &Vec3::new(3.0, 0.0, 0.0), &Vec3::x()), 3.0);
    }

    #[test]
    fn line_cross_product() {
        let l = LineCorrespondence {
            vertex: 0,
            line: PluckerLine {
                d: Vec3::z(),
                m: Vec3::zeros(),
            },
            pixel: 0,
        };
        assert_eq!(residual_line(&l, &Vec3::x()), Vec3::new(0.0, -1.0, 0.0));
    }
}
