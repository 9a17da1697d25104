use crate::error::{Error, Result};
use crate::geometry::DepthFrame;

/// Invalidates depths beyond `threshold_mm` and pixels outside `mask`.
/// An existing frame mask is intersected with the new one.
pub fn preprocess(raw: &DepthFrame, threshold_mm: f64, mask: Option<&[bool]>) -> Result<DepthFrame> {
    if let Some(m) = mask {
        if m.len() != raw.depth.len() {
            return Err(Error::MaskSize {
                width: raw.width(),
                height: raw.height(),
                mask_width: m.len() % raw.width().max(1),
                mask_height: m.len() / raw.width().max(1),
            });
        }
    }
    let mut out = raw.clone();
    for (i, d) in out.depth.iter_mut().enumerate() {
        let keep = raw.valid_depth(i).is_some_and(|v| v <= threshold_mm) && mask.is_none_or(|m| m[i]);
        if !keep {
            *d = 0.0;
        }
    }
    out.mask = None;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;

    fn frame() -> DepthFrame {
        let k = CameraIntrinsics::new(100.0, 100.0, 1.5, 0.5, 4, 2).unwrap();
        DepthFrame::new(k, vec![500.0, 799.0, 800.0, 801.0, 0.0, 1200.0, 650.0, 700.0]).unwrap()
    }

    #[test]
    fn threshold_only() {
        let f = preprocess(&frame(), 800.0, None).unwrap();
        assert_eq!(f.depth, vec![500.0, 799.0, 800.0, 0.0, 0.0, 0.0, 650.0, 700.0]);
    }

    #[test]
    fn mask_intersection() {
        let mask = [true, false, true, true, true, true, true, false];
        let f = preprocess(&frame(), 800.0, Some(&mask)).unwrap();
        assert_eq!(f.depth, vec![500.0, 0.0, 800.0, 0.0, 0.0, 0.0, 650.0, 0.0]);
        let empty = preprocess(&frame(), 800.0, Some(&[false; 8])).unwrap();
        assert_eq!(empty.valid_count(), 0);
    }

    #[test]
    fn mask_size_mismatch() {
        assert!(matches!(preprocess(&frame(), 800.0, Some(&[true; 3])), Err(Error::MaskSize { .. })));
    }
}
