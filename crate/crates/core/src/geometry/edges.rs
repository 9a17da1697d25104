use super::camera::DepthFrame;
use crate::error::{Error, Result};

/// Marks valid pixels whose depth differs from a valid 4-neighbor by more than
/// `jump_mm`, or that have an invalid or masked-out 4-neighbor. Neighbors
/// outside the image are ignored.
pub fn depth_discontinuities(frame: &DepthFrame, jump_mm: f64) -> Vec<bool> {
    let (w, h) = (frame.width(), frame.height());
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let Some(d) = frame.valid_depth(idx) else {
                continue;
            };
            let mut neighbors = [None; 4];
            if x > 0 {
                neighbors[0] = Some(idx - 1);
            }
            if x + 1 < w {
                neighbors[1] = Some(idx + 1);
            }
            if y > 0 {
                neighbors[2] = Some(idx - w);
            }
            if y + 1 < h {
                neighbors[3] = Some(idx + w);
            }
            out[idx] = neighbors.iter().flatten().any(|&n| match frame.valid_depth(n) {
                Some(e) => (e - d).abs() > jump_mm,
                None => true,
            });
        }
    }
    out
}

/// Exact squared Euclidean distance transform of a binary mask, with nearest
/// marked pixel queries. Ties resolve to the lowest pixel index.
#[derive(Clone, Debug)]
pub struct DistanceTransform {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    sq: Vec<i64>,
}

/// Builds the distance transform of `mask` (row-major, `width` columns).
pub fn distance_transform(mask: &[bool], width: usize) -> Result<DistanceTransform> {
    if width == 0 || !mask.len().is_multiple_of(width) {
        return Err(Error::LengthMismatch(format!(
            "mask of {} pixels is not a multiple of width {width}",
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    let height = mask.len() / width;
    let mut cols = vec![INF; mask.len()];
    let mut f = Vec::with_capacity(height.max(width));
    let mut d = vec![INF; height.max(width)];
    for x in 0..width {
        f.clear();
        f.extend((0..height).map(|y| if mask[y * width + x] { 0 } else { INF }));
        lower_envelope(&f, &mut d[..height]);
        for y in 0..height {
            cols[y * width + x] = d[y];
        }
    }
    let mut sq = vec![INF; mask.len()];
    for y in 0..height {
        let row = &cols[y * width..(y + 1) * width];
        lower_envelope(row, &mut d[..width]);
        sq[y * width..(y + 1) * width].copy_from_slice(&d[..width]);
    }
    Ok(DistanceTransform {
        width,
        height,
        mask: mask.to_vec(),
        sq,
    })
}

const INF: i64 = i64::MAX / 4;

/// One-dimensional squared distance transform `d[q] = min_p f[p] + (q-p)^2`
/// over the finite entries of `f`.
fn lower_envelope(f: &[i64], d: &mut [i64]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    let inter = |p: usize, q: usize| -> f64 {
        let (pi, qi) = (p as i64, q as i64);
        ((f[q] + qi * qi) - (f[p] + pi * pi)) as f64 / (2 * (qi - pi)) as f64
    };
    for q in 0..n {
        if f[q] >= INF {
            continue;
        }
        if v.is_empty() {
            v.push(q);
            z.clear();
            z.push(f64::NEG_INFINITY);
            z.push(f64::INFINITY);
            continue;
        }
        let mut s = inter(*v.last().unwrap(), q);
        while s <= z[v.len() - 1] {
            v.pop();
            z.pop();
            if v.is_empty() {
                break;
            }
            s = inter(*v.last().unwrap(), q);
        }
        if v.is_empty() {
            v.push(q);
            z.clear();
            z.push(f64::NEG_INFINITY);
            z.push(f64::INFINITY);
        } else {
            *z.last_mut().unwrap() = s;
            v.push(q);
            z.push(f64::INFINITY);
        }
    }
    if v.is_empty() {
        d.fill(INF);
        return;
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as i64 - v[k] as i64;
        *out = f[v[k]] + dq * dq;
    }
}

impl DistanceTransform {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn squared_distance(&self, idx: usize) -> i64 {
        self.sq[idx]
    }

    pub fn distance(&self, idx: usize) -> f64 {
        (self.sq[idx] as f64).sqrt()
    }

    /// Lowest-index marked pixel at the minimal distance from `idx`.
    pub fn nearest(&self, idx: usize) -> usize {
        let (x, y) = ((idx % self.width) as i64, (idx / self.width) as i64);
        let dsq = self.sq[idx];
        let r = isqrt(dsq);
        for dy in -r..=r {
            let yy = y + dy;
            if yy < 0 || yy >= self.height as i64 {
                continue;
            }
            let rem = dsq - dy * dy;
            let dx = isqrt(rem);
            if dx * dx != rem {
                continue;
            }
            for xx in [x - dx, x + dx] {
                if xx >= 0 && xx < self.width as i64 && self.mask[(yy * self.width as i64 + xx) as usize] {
                    return (yy * self.width as i64 + xx) as usize;
                }
            }
        }
        unreachable!("squared distance {dsq} has no witness pixel")
    }

    /// Nearest marked pixel for every pixel.
    pub fn nearest_all(&self) -> Vec<usize> {
        (0..self.sq.len()).map(|i| self.nearest(i)).collect()
    }
}

fn isqrt(n: i64) -> i64 {
    let mut r = (n as f64).sqrt() as i64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraIntrinsics;

    fn brute(mask: &[bool], w: usize) -> Vec<(i64, usize)> {
        let marked: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        (0..mask.len())
            .map(|i| {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                marked
                    .iter()
                    .map(|&j| {
                        let (a, b) = ((j % w) as i64, (j / w) as i64);
                        ((a - x).pow(2) + (b - y).pow(2), j)
                    })
                    .min()
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn three_four_five() {
        let mut m = vec![false; 20 * 20];
        m[5 * 20 + 5] = true;
        let dt = distance_transform(&m, 20).unwrap();
        assert_eq!(dt.distance(9 * 20 + 8), 5.0);
        assert_eq!(dt.nearest(9 * 20 + 8), 5 * 20 + 5);
    }

    #[test]
    fn full_and_empty_masks() {
        let dt = distance_transform(&[true; 12], 4).unwrap();
        assert!((0..12).all(|i| dt.distance(i) == 0.0 && dt.nearest(i) == i));
        assert!(matches!(distance_transform(&[false; 12], 4), Err(Error::EmptyMask)));
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let mut s = 12345u64;
        for _ in 0..5 {
            let m: Vec<bool> = (0..64 * 64)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 33).is_multiple_of(97)
                })
                .collect();
            if !m.iter().any(|&b| b) {
                continue;
            }
            let dt = distance_transform(&m, 64).unwrap();
            for (i, (d, j)) in brute(&m, 64).into_iter().enumerate() {
                assert_eq!(dt.squared_distance(i), d);
                assert_eq!(dt.nearest(i), j);
            }
        }
    }

    #[test]
    fn constant_frame_has_no_edges() {
        let k = CameraIntrinsics::new(100.0, 100.0, 5.0, 5.0, 10, 10).unwrap();
        let f = DepthFrame::new(k, vec![500.0; 100]).unwrap();
        assert!(!depth_discontinuities(&f, 20.0).iter().any(|&b| b));
    }

    #[test]
    fn step_gives_two_columns() {
        let k = CameraIntrinsics::new(100.0, 100.0, 5.0, 5.0, 10, 10).unwrap();
        let depth = (0..100).map(|i| if i % 10 < 5 { 500.0 } else { 600.0 }).collect();
        let f = DepthFrame::new(k, depth).unwrap();
        let e = depth_discontinuities(&f, 20.0);
        for i in 0..100 {
            assert_eq!(e[i], i % 10 == 4 || i % 10 == 5);
        }
    }
}
