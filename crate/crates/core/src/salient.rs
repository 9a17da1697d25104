//! Fingertip detections associated with model fingertips by an exact
//! assignment with false-positive and miss options.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data_terms::{Metric, PointCorrespondence};
use crate::geometry::{CameraIntrinsics, DepthFrame, PointCloud};
use crate::kinematics::Vec3;
use crate::model::{PosedModel, SkinnedModel};

/// Detections below this confidence are discarded.
pub const CONFIDENCE_THRESHOLD: f64 = 3.0;

/// Matches closer than this (mm) produce no correspondences.
pub const SKIP_DISTANCE_MM: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.x && u < self.x + self.w && v >= self.y && v < self.y + self.h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub bbox: BoundingBox,
    pub confidence: f64,
    /// Valid, masked-in pixels of the box lifted to 3D.
    pub cloud: PointCloud,
    pub centroid: Vec3,
}

impl Detection {
    /// Lifts the pixels inside `bbox`. `None` when the box holds no valid pixel.
    pub fn from_frame(frame_id: usize, bbox: BoundingBox, confidence: f64, frame: &DepthFrame) -> Option<Self> {
        let mut cloud = PointCloud::default();
        let (w, h) = (frame.width() as f64, frame.height() as f64);
        let y0 = bbox.y.ceil().max(0.0) as usize;
        let x0 = bbox.x.ceil().max(0.0) as usize;
        let y1 = (bbox.y + bbox.h).min(h) as usize;
        let x1 = (bbox.x + bbox.w).min(w) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let idx = y * frame.width() + x;
                if let Some(p) = frame.point(idx) {
                    cloud.points.push(p);
                    cloud.pixel_of_point.push(idx);
                }
            }
        }
        let centroid = cloud.centroid()?;
        Some(Self {
            frame: frame_id,
            bbox,
            confidence,
            cloud,
            centroid,
        })
    }
}

/// Keeps detections with confidence at least `threshold`.
pub fn confident(detections: Vec<Detection>, threshold: f64) -> Vec<Detection> {
    detections.into_iter().filter(|d| d.confidence >= threshold).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FingertipRegion {
    pub fingertip: usize,
    pub vertices: Vec<usize>,
    pub visible: Vec<usize>,
    /// Centroid of the visible vertices, or of all vertices if none is visible.
    pub centroid: Vec3,
}

pub fn fingertip_regions(model: &SkinnedModel, posed: &PosedModel, visible: &[bool]) -> Vec<FingertipRegion> {
    model
        .fingertips
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let vis: Vec<usize> = f.vertices.iter().copied().filter(|&v| visible[v]).collect();
            let src = if vis.is_empty() { &f.vertices } else { &vis };
            let centroid = src.iter().map(|&v| posed.vertices[v]).sum::<Vec3>() / src.len() as f64;
            FingertipRegion {
                fingertip: t,
                vertices: f.vertices.clone(),
                visible: vis,
                centroid,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `w_s = 1`
    Uniform,
    /// `w_s = c_s / c_thr`
    #[default]
    Confidence,
}

/// Distances `w_st` between detection and fingertip centroids, and
/// per-detection false-positive weights `w_s`.
pub fn assignment_costs(detections: &[Detection], tips: &[FingertipRegion], mode: WeightMode) -> (DMatrix<f64>, Vec<f64>) {
    let w = DMatrix::from_fn(detections.len(), tips.len(), |s, t| {
        (detections[s].centroid - tips[t].centroid).norm()
    });
    let ws = detections
        .iter()
        .map(|d| match mode {
            WeightMode::Uniform => 1.0,
            WeightMode::Confidence => d.confidence / CONFIDENCE_THRESHOLD,
        })
        .collect();
    (w, ws)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentSolution {
    /// `e[s][t]`
    pub e: Vec<Vec<bool>>,
    /// Detection `s` is a false positive.
    pub alpha: Vec<bool>,
    /// Fingertip `t` is missed.
    pub beta: Vec<bool>,
    pub objective: f64,
}

impl AssignmentSolution {
    pub fn assigned(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.e
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().enumerate().filter(|(_, &b)| b).map(move |(t, _)| (s, t)))
    }

    /// Every detection and fingertip is used exactly once.
    pub fn is_feasible(&self) -> bool {
        let rows = self
            .e
            .iter()
            .zip(&self.alpha)
            .all(|(r, &a)| r.iter().filter(|&&b| b).count() + usize::from(a) == 1);
        let cols = (0..self.beta.len()).all(|t| {
            self.e.iter().filter(|r| r[t]).count() + usize::from(self.beta[t]) == 1
        });
        rows && cols
    }
}

/// `sum e_st w_st + lambda sum alpha_s w_s + lambda sum beta_t`, summed in a
/// fixed order so equal labelings give bitwise-equal values.
pub fn assignment_objective(e: &[Vec<bool>], alpha: &[bool], beta: &[bool], w: &DMatrix<f64>, ws: &[f64], lambda: f64) -> f64 {
    let mut assign = 0.0;
    for (s, row) in e.iter().enumerate() {
        for (t, &b) in row.iter().enumerate() {
            if b {
                assign += w[(s, t)];
            }
        }
    }
    let fp: f64 = alpha.iter().zip(ws).filter(|(&a, _)| a).map(|(_, w)| w).sum();
    let miss = beta.iter().filter(|&&b| b).count() as f64;
    assign + lambda * fp + lambda * miss
}

/// Primary cost with an integer tie-break key.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Cost(f64, i64);

impl Cost {
    fn add(self, o: Cost) -> Cost {
        Cost(self.0 + o.0, self.1 + o.1)
    }
    fn sub(self, o: Cost) -> Cost {
        Cost(self.0 - o.0, self.1 - o.1)
    }
    fn lt(self, o: Cost) -> bool {
        self.0 < o.0 || (self.0 == o.0 && self.1 < o.1)
    }
}

/// Minimum-cost perfect matching of a square cost matrix (Hungarian method
/// with potentials). Returns the column of each row.
fn hungarian(cost: &[Vec<Cost>]) -> Vec<usize> {
    let n = cost.len();
    let inf = Cost(f64::INFINITY, 0);
    let zero = Cost(0.0, 0);
    let mut u = vec![zero; n + 1];
    let mut v = vec![zero; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1].sub(u[i0]).sub(v[j]);
                if cur.lt(minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j].lt(delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] = u[p[j]].add(delta);
                    v[j] = v[j].sub(delta);
                } else {
                    minv[j] = minv[j].sub(delta);
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[p[j] - 1] = j - 1;
    }
    col_of_row
}

/// Exact minimizer of the assignment objective. Among equal-cost labelings
/// the one with fewer assignments wins, then the smaller sum of
/// `s * T + t` over assigned pairs.
pub fn solve_assignment(w: &DMatrix<f64>, ws: &[f64], lambda: f64) -> AssignmentSolution {
    let (s_n, t_n) = (w.nrows(), w.ncols());
    assert_eq!(ws.len(), s_n);
    let n = s_n + t_n;
    if n == 0 {
        return AssignmentSolution {
            e: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            objective: 0.0,
        };
    }
    let finite: f64 = w.iter().sum::<f64>() + lambda * ws.iter().sum::<f64>() + lambda * t_n as f64;
    let forbidden = Cost(1.0 + 4.0 * finite.abs(), 0);
    let key = ((s_n * t_n + 1) * (s_n * t_n + 1)) as i64;
    let mut cost = vec![vec![Cost(0.0, 0); n]; n];
    for (r, row) in cost.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = match (r < s_n, c < t_n) {
                (true, true) => Cost(w[(r, c)], key + (r * t_n + c) as i64),
                (true, false) if c - t_n == r => Cost(lambda * ws[r], 0),
                (false, true) if r - s_n == c => Cost(lambda, 0),
                (false, false) => Cost(0.0, 0),
                _ => forbidden,
            };
        }
    }
    let cols = hungarian(&cost);
    let mut e = vec![vec![false; t_n]; s_n];
    let mut alpha = vec![false; s_n];
    let mut beta = vec![true; t_n];
    for s in 0..s_n {
        if cols[s] < t_n {
            e[s][cols[s]] = true;
            beta[cols[s]] = false;
        } else {
            alpha[s] = true;
        }
    }
    let objective = assignment_objective(&e, &alpha, &beta, w, ws, lambda);
    AssignmentSolution { e, alpha, beta, objective }
}

/// Point correspondences for assigned pairs: nothing for matches closer
/// than 10 mm; closest detection points when at least half of the fingertip
/// projects into the box; otherwise every visible fingertip vertex is pulled
/// to the detection centroid.
pub fn salient_correspondences(
    solution: &AssignmentSolution,
    w: &DMatrix<f64>,
    detections: &[Detection],
    tips: &[FingertipRegion],
    posed: &PosedModel,
    intrinsics: &CameraIntrinsics,
) -> Vec<PointCorrespondence> {
    let mut out = Vec::new();
    for (s, t) in solution.assigned() {
        if w[(s, t)] < SKIP_DISTANCE_MM {
            continue;
        }
        let det = &detections[s];
        let tip = &tips[t];
        let inside = tip
            .vertices
            .iter()
            .filter(|&&v| {
                let p = posed.vertices[v];
                if p.z <= 0.0 {
                    return false;
                }
                let (u, y) = intrinsics.project(&p);
                det.bbox.contains(u, y)
            })
            .count();
        let closest = 2 * inside >= tip.vertices.len();
        for &v in &tip.visible {
            let target = if closest {
                let p = posed.vertices[v];
                let i = (0..det.cloud.len())
                    .min_by(|&a, &b| {
                        (det.cloud.points[a] - p)
                            .norm_squared()
                            .total_cmp(&(det.cloud.points[b] - p).norm_squared())
                    })
                    .expect("detections hold at least one point");
                det.cloud.points[i]
            } else {
                det.centroid
            };
            out.push(PointCorrespondence {
                vertex: v,
                target,
                target_normal: -Vec3::z(),
                metric: Metric::PointToPoint,
            });
        }
    }
    out
}
