use nalgebra::{DMatrix, DVector};

use super::hull::ConvexHull;
use crate::kinematics::Vec3;

/// Closest points between two convex hulls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proximity {
    /// Zero when the hulls overlap.
    pub distance: f64,
    pub on_a: Vec3,
    pub on_b: Vec3,
}

#[derive(Clone, Copy, Debug)]
struct SupportPoint {
    w: Vec3,
    a: Vec3,
    b: Vec3,
}

/// Closest point to the origin of the convex hull of `pts`, as barycentric
/// weights over a minimal subset. `None` weights mean the origin is inside.
fn closest_on_simplex(pts: &[SupportPoint]) -> (Vec<SupportPoint>, Vec<f64>, bool) {
    let k = pts.len();
    let mut best: Option<(f64, usize, Vec<usize>, Vec<f64>)> = None;
    let mut inside = false;
    for mask in 1usize..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let p0 = pts[idx[0]].w;
        let m = idx.len() - 1;
        let lambda = if m == 0 {
            vec![1.0]
        } else {
            let e = DMatrix::from_fn(3, m, |r, c| pts[idx[c + 1]].w[r] - p0[r]);
            let gram = e.transpose() * &e;
            let scale = gram.diagonal().max();
            if gram.determinant().abs() <= 1e-14 * scale.powi(m as i32) {
                continue;
            }
            let Some(mu) = gram.lu().solve(&(-(e.transpose() * DVector::from_column_slice(p0.as_slice())))) else {
                continue;
            };
            let mut l = vec![1.0 - mu.sum()];
            l.extend(mu.iter());
            l
        };
        if lambda.iter().any(|&x| x < 0.0) {
            continue;
        }
        if idx.len() == 4 {
            inside = true;
        }
        let v: Vec3 = idx.iter().zip(&lambda).map(|(&i, &l)| pts[i].w * l).sum();
        let d = v.norm_squared();
        if best.as_ref().is_none_or(|(bd, bn, _, _)| d < *bd || (d == *bd && idx.len() < *bn)) {
            best = Some((d, idx.len(), idx, lambda));
        }
    }
    let (_, _, idx, lambda) = best.expect("a single vertex is always a valid subset");
    (idx.iter().map(|&i| pts[i]).collect(), lambda, inside)
}

/// GJK distance between the hulls' vertex sets.
pub fn gjk_distance(a: &ConvexHull, b: &ConvexHull) -> Proximity {
    let support = |d: &Vec3| {
        let pa = a.support(d);
        let pb = b.support(&-d);
        SupportPoint { w: pa - pb, a: pa, b: pb }
    };
    let mut simplex = vec![support(&(b.vertices()[0] - a.vertices()[0]))];
    let mut lambda = vec![1.0];
    let mut v = simplex[0].w;
    for _ in 0..128 {
        let vv = v.norm_squared();
        if vv <= 1e-24 {
            break;
        }
        let s = support(&-v);
        if vv - v.dot(&s.w) <= 1e-12 * vv.max(1.0) || simplex.iter().any(|p| p.w == s.w) {
            break;
        }
        simplex.push(s);
        let (next, l, inside) = closest_on_simplex(&simplex);
        simplex = next;
        lambda = l;
        v = simplex.iter().zip(&lambda).map(|(p, &l)| p.w * l).sum();
        if inside {
            v = Vec3::zeros();
            break;
        }
    }
    let on_a: Vec3 = simplex.iter().zip(&lambda).map(|(p, &l)| p.a * l).sum();
    let on_b: Vec3 = simplex.iter().zip(&lambda).map(|(p, &l)| p.b * l).sum();
    Proximity {
        distance: v.norm(),
        on_a,
        on_b,
    }
}
