use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::kinematics::Vec3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn of<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let v: Vec<f64> = values.into_iter().copied().collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            mean,
            std,
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: v.len(),
        }
    }
}

/// Per-frame, per-joint errors and their aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// Pixels between projected joints.
    pub errors_2d: Vec<Vec<f64>>,
    /// Millimetres between joints.
    pub errors_3d: Vec<Vec<f64>>,
    pub summary_2d: Aggregate,
    pub summary_3d: Aggregate,
}

impl EvaluationRecord {
    /// Mean 3D error of each frame.
    pub fn frame_means_3d(&self) -> Vec<f64> {
        self.errors_3d.iter().map(|f| Aggregate::of(f).mean).collect()
    }
}

/// Compares estimated and ground-truth joint positions (camera frame) over
/// `subset`, or all joints when `None`.
pub fn evaluate(
    estimated: &[Vec<Vec3>],
    truth: &[Vec<Vec3>],
    intrinsics: &CameraIntrinsics,
    subset: Option<&[usize]>,
) -> Result<EvaluationRecord> {
    if estimated.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} estimated frames for {} ground-truth frames",
            estimated.len(),
            truth.len()
        )));
    }
    let mut errors_2d = Vec::with_capacity(truth.len());
    let mut errors_3d = Vec::with_capacity(truth.len());
    for (e, t) in estimated.iter().zip(truth) {
        if e.len() != t.len() {
            return Err(Error::LengthMismatch(format!("{} estimated joints for {} ground-truth joints", e.len(), t.len())));
        }
        let joints: Vec<usize> = match subset {
            Some(s) => s.to_vec(),
            None => (0..t.len()).collect(),
        };
        let mut f2 = Vec::with_capacity(joints.len());
        let mut f3 = Vec::with_capacity(joints.len());
        for &j in &joints {
            let (a, b) = (e[j], t[j]);
            f3.push((a - b).norm());
            let (ua, va) = intrinsics.project(&a);
            let (ub, vb) = intrinsics.project(&b);
            f2.push(((ua - ub).powi(2) + (va - vb).powi(2)).sqrt());
        }
        errors_2d.push(f2);
        errors_3d.push(f3);
    }
    let summary_2d = Aggregate::of(errors_2d.iter().flatten());
    let summary_3d = Aggregate::of(errors_3d.iter().flatten());
    Ok(EvaluationRecord {
        errors_2d,
        errors_3d,
        summary_2d,
        summary_3d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        let j = vec![vec![Vec3::new(1.0, 2.0, 500.0), Vec3::new(-3.0, 0.0, 450.0)]; 3];
        let r = evaluate(&j, &j, &CameraIntrinsics::vga(), None).unwrap();
        assert_eq!(r.summary_2d.mean, 0.0);
        assert_eq!(r.summary_3d.max, 0.0);
    }

    #[test]
    fn pinhole_shift() {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        // 4 px at fx 500 and 750 mm depth is 6 mm laterally.
        let t = vec![vec![Vec3::new(0.0, 0.0, 750.0)]];
        let e = vec![vec![Vec3::new(6.0, 0.0, 750.0)]];
        let r = evaluate(&e, &t, &k, None).unwrap();
        assert!((r.summary_2d.mean - 4.0).abs() < 1e-12);
        assert!((r.summary_3d.mean - 6.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let t = vec![vec![Vec3::zeros()]];
        assert!(evaluate(&[], &t, &CameraIntrinsics::vga(), None).is_err());
    }
}
