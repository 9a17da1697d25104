use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Vec3;

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// 640x480 with a 575 px focal length, typical for structured-light sensors.
    pub fn vga() -> Self {
        Self {
            fx: 575.0,
            fy: 575.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!("invalid intrinsics {self:?}")));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Continuous image coordinates of a camera-space point.
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Nearest pixel index of a camera-space point, if inside the image.
    pub fn project_to_pixel(&self, p: &Vec3) -> Option<usize> {
        if p.z <= 0.0 {
            return None;
        }
        let (u, v) = self.project(p);
        let (x, y) = (u.round(), v.round());
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some(y as usize * self.width + x as usize)
    }

    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new(depth * (u - self.cx) / self.fx, depth * (v - self.cy) / self.fy, depth)
    }
}

/// Depth image in millimeters; zero marks invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrame {
    pub intrinsics: CameraIntrinsics,
    pub depth: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

impl DepthFrame {
    pub fn new(intrinsics: CameraIntrinsics, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != intrinsics.pixel_count() {
            return Err(Error::LengthMismatch(format!(
                "{} depth values for a {}x{} frame",
                depth.len(),
                intrinsics.width,
                intrinsics.height
            )));
        }
        Ok(Self {
            intrinsics,
            depth,
            mask: None,
        })
    }

    pub fn empty(intrinsics: CameraIntrinsics) -> Self {
        Self {
            intrinsics,
            depth: vec![0.0; intrinsics.pixel_count()],
            mask: None,
        }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.depth.len() {
            return Err(Error::MaskSize {
                width: self.width(),
                height: self.height(),
                mask_width: mask.len() % self.width().max(1),
                mask_height: mask.len() / self.width().max(1),
            });
        }
        self.mask = Some(mask);
        Ok(self)
    }

    /// Depth if the pixel is valid and masked in.
    #[inline]
    pub fn valid_depth(&self, idx: usize) -> Option<f64> {
        let d = self.depth[idx];
        let masked_in = self.mask.as_ref().is_none_or(|m| m[idx]);
        (d > 0.0 && d.is_finite() && masked_in).then_some(d)
    }

    pub fn is_valid(&self, idx: usize) -> bool {
        self.valid_depth(idx).is_some()
    }

    pub fn valid_count(&self) -> usize {
        (0..self.depth.len()).filter(|&i| self.is_valid(i)).count()
    }

    pub fn pixel_xy(&self, idx: usize) -> (usize, usize) {
        (idx % self.width(), idx / self.width())
    }

    /// Camera-space point of a valid pixel.
    pub fn point(&self, idx: usize) -> Option<Vec3> {
        let (x, y) = self.pixel_xy(idx);
        self.valid_depth(idx)
            .map(|d| self.intrinsics.back_project(x as f64, y as f64, d))
    }
}

/// Back-projected points with normals and their source pixels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub pixel_of_point: Vec<usize>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().sum::<Vec3>() / self.points.len() as f64)
    }
}

/// Back-projects every valid, masked-in pixel. Normals are left empty.
pub fn depth_to_cloud(frame: &DepthFrame) -> PointCloud {
    let mut cloud = PointCloud::default();
    for idx in 0..frame.depth.len() {
        if let Some(p) = frame.point(idx) {
            cloud.points.push(p);
            cloud.pixel_of_point.push(idx);
        }
    }
    cloud
}

/// Line with unit direction `d` and moment `m = p x d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PluckerLine {
    pub d: Vec3,
    pub m: Vec3,
}

impl PluckerLine {
    pub fn through(point: &Vec3, direction: &Vec3) -> Self {
        let d = direction.normalize();
        Self { d, m: point.cross(&d) }
    }

    /// `x × d − m`; its norm is the distance of `x` from the line.
    pub fn residual(&self, x: &Vec3) -> Vec3 {
        x.cross(&self.d) - self.m
    }
}

/// Projection ray of a pixel through the camera center.
pub fn pixel_ray(u: f64, v: f64, k: &CameraIntrinsics) -> PluckerLine {
    let d = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalize();
    PluckerLine { d, m: Vec3::zeros() }
}
