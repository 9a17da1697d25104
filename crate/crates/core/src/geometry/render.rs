use super::camera::{CameraIntrinsics, DepthFrame};
use crate::kinematics::Vec3;

/// A vertex is visible when its depth is within this distance of the
/// z-buffer at its pixel.
pub const VISIBILITY_TOLERANCE_MM: f64 = 2.0;

/// Fragments closer than this to the camera plane are clipped.
const NEAR_PLANE_MM: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct Rendering {
    /// Rendered depth; background pixels are 0.
    pub frame: DepthFrame,
    /// Triangle covering each pixel, `usize::MAX` for background.
    pub face: Vec<usize>,
    /// Per-vertex visibility.
    pub visible: Vec<bool>,
}

impl Rendering {
    pub fn visible_vertices(&self) -> Vec<usize> {
        (0..self.visible.len()).filter(|&i| self.visible[i]).collect()
    }
}

/// Z-buffer rasterization of camera-space triangles, sampling pixel centers
/// with perspective-correct depth.
pub fn render_depth(vertices: &[Vec3], triangles: &[[usize; 3]], k: &CameraIntrinsics) -> Rendering {
    let (w, h) = (k.width, k.height);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut face = vec![usize::MAX; w * h];
    let projected: Vec<(f64, f64)> = vertices.iter().map(|v| k.project(v)).collect();
    for (fi, tri) in triangles.iter().enumerate() {
        if tri.iter().any(|&i| vertices[i].z < NEAR_PLANE_MM) {
            continue;
        }
        let [a, b, c] = tri.map(|i| projected[i]);
        let area = edge(a, b, c);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let inv_z = tri.map(|i| 1.0 / vertices[i].z);
        let x0 = a.0.min(b.0).min(c.0).ceil().max(0.0);
        let x1 = a.0.max(b.0).max(c.0).floor().min(w as f64 - 1.0);
        let y0 = a.1.min(b.1).min(c.1).ceil().max(0.0);
        let y1 = a.1.max(b.1).max(c.1).floor().min(h as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for y in y0 as usize..=y1 as usize {
            for x in x0 as usize..=x1 as usize {
                let p = (x as f64, y as f64);
                let l0 = edge(b, c, p) / area;
                let l1 = edge(c, a, p) / area;
                let l2 = edge(a, b, p) / area;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let z = 1.0 / (l0 * inv_z[0] + l1 * inv_z[1] + l2 * inv_z[2]);
                let idx = y * w + x;
                if z < zbuf[idx] {
                    zbuf[idx] = z;
                    face[idx] = fi;
                }
            }
        }
    }
    let visible = vertices
        .iter()
        .map(|v| {
            k.project_to_pixel(v).is_some_and(|idx| {
                zbuf[idx].is_finite() && (v.z - zbuf[idx]).abs() <= VISIBILITY_TOLERANCE_MM
            })
        })
        .collect();
    let depth = zbuf.into_iter().map(|z| if z.is_finite() { z } else { 0.0 }).collect();
    Rendering {
        frame: DepthFrame {
            intrinsics: *k,
            depth,
            mask: None,
        },
        face,
        visible,
    }
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}
