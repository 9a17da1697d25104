use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid twist: rotation axis norm {norm} is neither 0 nor 1")]
    InvalidTwist { norm: f64 },

    #[error("pose has {got} coordinates, skeleton expects {expected}")]
    PoseLength { expected: usize, got: usize },

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("skinning weights of vertex {vertex} sum to {sum}, expected 1")]
    WeightSum { vertex: usize, sum: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("distance transform of an empty mask")]
    EmptyMask,

    #[error("degenerate point set for convex hull: {0}")]
    DegenerateHull(&'static str),

    #[error("no correspondences or residual rows: insufficient observation")]
    InsufficientObservation,

    #[error("mask is {mask_width}x{mask_height}, frame is {width}x{height}")]
    MaskSize {
        width: usize,
        height: usize,
        mask_width: usize,
        mask_height: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
