use std::collections::HashMap;

use crate::kinematics::Vec3;

/// Uniform-grid index for fixed-radius nearest-neighbor queries.
#[derive(Clone, Debug)]
pub struct NearestNeighborIndex {
    points: Vec<Vec3>,
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    lo: [i64; 3],
    hi: [i64; 3],
}

impl NearestNeighborIndex {
    /// `cell` is the grid spacing in mm; queries are fastest when the radius
    /// is on the order of one cell.
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let (mut lo, mut hi) = ([i64::MAX; 3], [i64::MIN; 3]);
        for (i, p) in points.iter().enumerate() {
            let key = key_of(p, cell);
            for a in 0..3 {
                lo[a] = lo[a].min(key[a]);
                hi[a] = hi[a].max(key[a]);
            }
            cells.entry(key).or_default().push(i);
        }
        Self {
            points: points.to_vec(),
            cell,
            cells,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Nearest point within `radius` (inclusive) as `(index, distance)`.
    /// Equidistant points resolve to the lowest index.
    pub fn query(&self, q: &Vec3, radius: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() || !(radius >= 0.0) {
            return None;
        }
        let r2 = radius * radius;
        let lo_q = key_of(&q.add_scalar(-radius), self.cell);
        let hi_q = key_of(&q.add_scalar(radius), self.cell);
        let mut range = [(0i64, 0i64); 3];
        for a in 0..3 {
            range[a] = (lo_q[a].max(self.lo[a]), hi_q[a].min(self.hi[a]));
            if range[a].0 > range[a].1 {
                return None;
            }
        }
        let span: i64 = range.iter().map(|(a, b)| b - a + 1).product();
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |i: usize| {
            let d2 = (self.points[i] - q).norm_squared();
            if d2 <= r2 && best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && i < bi)) {
                best = Some((d2, i));
            }
        };
        if span as usize > self.cells.len() {
            for ids in self.cells.values() {
                ids.iter().for_each(|&i| consider(i));
            }
        } else {
            for x in range[0].0..=range[0].1 {
                for y in range[1].0..=range[1].1 {
                    for z in range[2].0..=range[2].1 {
                        if let Some(ids) = self.cells.get(&[x, y, z]) {
                            ids.iter().for_each(|&i| consider(i));
                        }
                    }
                }
            }
        }
        best.map(|(d2, i)| (i, d2.sqrt()))
    }
}

fn key_of(p: &Vec3, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}
