//! Meshes, depth frames and the image-space machinery around them.

mod camera;
mod edges;
mod filter;
mod mesh;
mod nn;
mod render;

pub use camera::{depth_to_cloud, pixel_ray, CameraIntrinsics, DepthFrame, PluckerLine, PointCloud};
pub use edges::{depth_discontinuities, distance_transform, DistanceTransform};
pub use filter::{bilateral_smooth, bilateral_smooth_and_normals, BilateralParams};
pub use mesh::TriangleMesh;
pub use nn::NearestNeighborIndex;
pub use render::{render_depth, Rendering, VISIBILITY_TOLERANCE_MM};
