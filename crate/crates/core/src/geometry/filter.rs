use serde::{Deserialize, Serialize};

use super::camera::{DepthFrame, PointCloud};
use crate::kinematics::Vec3;

/// Neighbors farther apart than this in depth are not used as tangent
/// samples for normal estimation.
const TANGENT_CONTINUITY_MM: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilateralParams {
    /// Spatial sigma in pixels.
    pub spatial_sigma: f64,
    /// Range sigma in millimeters.
    pub range_sigma: f64,
}

impl Default for BilateralParams {
    fn default() -> Self {
        Self {
            spatial_sigma: 3.0,
            range_sigma: 30.0,
        }
    }
}

/// Windowed bilateral filter over valid pixels; window side is
/// `2 ceil(2 spatial_sigma) + 1`. Invalid pixels stay invalid.
pub fn bilateral_smooth(frame: &DepthFrame, spatial_sigma: f64, range_sigma: f64) -> DepthFrame {
    let (w, h) = (frame.width() as isize, frame.height() as isize);
    let radius = (2.0 * spatial_sigma).ceil() as isize;
    let spatial: Vec<f64> = (-radius..=radius)
        .flat_map(|dy| (-radius..=radius).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| (-((dx * dx + dy * dy) as f64) / (2.0 * spatial_sigma * spatial_sigma)).exp())
        .collect();
    let side = (2 * radius + 1) as usize;
    let inv_range = 1.0 / (2.0 * range_sigma * range_sigma);
    let mut out = frame.clone();
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            let Some(center) = frame.valid_depth(idx) else {
                continue;
            };
            let (mut sum, mut norm) = (0.0, 0.0);
            for dy in -radius..=radius {
                let yy = y + dy;
                if yy < 0 || yy >= h {
                    continue;
                }
                for dx in -radius..=radius {
                    let xx = x + dx;
                    if xx < 0 || xx >= w {
                        continue;
                    }
                    if let Some(d) = frame.valid_depth((yy * w + xx) as usize) {
                        let diff = d - center;
                        let wt = spatial[(dy + radius) as usize * side + (dx + radius) as usize]
                            * (-diff * diff * inv_range).exp();
                        sum += wt * d;
                        norm += wt;
                    }
                }
            }
            out.depth[idx] = sum / norm;
        }
    }
    out
}

/// Smooths the frame and lifts it to a point cloud with camera-facing normals
/// from central-difference tangents. Pixels without a usable tangent pair are
/// dropped.
pub fn bilateral_smooth_and_normals(frame: &DepthFrame, spatial_sigma: f64, range_sigma: f64) -> PointCloud {
    let smoothed = bilateral_smooth(frame, spatial_sigma, range_sigma);
    cloud_with_normals(&smoothed)
}

pub(crate) fn cloud_with_normals(frame: &DepthFrame) -> PointCloud {
    let (w, h) = (frame.width(), frame.height());
    let mut cloud = PointCloud::default();
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let Some(p) = frame.point(idx) else {
                continue;
            };
            let neighbor = |nx: isize, ny: isize| -> Option<Vec3> {
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    return None;
                }
                frame
                    .point(ny as usize * w + nx as usize)
                    .filter(|q| (q.z - p.z).abs() < TANGENT_CONTINUITY_MM)
            };
            let (xi, yi) = (x as isize, y as isize);
            let tangent = |a: Option<Vec3>, b: Option<Vec3>| match (a, b) {
                (Some(a), Some(b)) => Some(b - a),
                (None, Some(b)) => Some(b - p),
                (Some(a), None) => Some(p - a),
                (None, None) => None,
            };
            let (Some(tu), Some(tv)) = (
                tangent(neighbor(xi - 1, yi), neighbor(xi + 1, yi)),
                tangent(neighbor(xi, yi - 1), neighbor(xi, yi + 1)),
            ) else {
                continue;
            };
            let n = tu.cross(&tv);
            let len = n.norm();
            if len == 0.0 {
                continue;
            }
            let mut n = n / len;
            if n.dot(&p) > 0.0 {
                n = -n;
            }
            cloud.points.push(p);
            cloud.normals.push(n);
            cloud.pixel_of_point.push(idx);
        }
    }
    cloud
}
