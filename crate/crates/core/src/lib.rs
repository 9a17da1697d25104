//! Model-based tracking of hands interacting with objects from depth frames.
//!
//! Skinned meshes are posed by twist kinematics and fitted to each frame by
//! minimizing a stacked least-squares objective built from data, collision,
//! salient-point, physics, anatomy and regularization terms.

pub mod collision;
pub mod data_terms;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod model;
pub mod physics;
pub mod pipeline;
pub mod salient;
pub mod solver;

pub use error::{Error, Result};
