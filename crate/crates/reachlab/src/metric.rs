//! Hausdorff machinery on finite state clouds and the weak* pairing
//! discrepancy between piecewise-constant controls.
//!
//! Directed Hausdorff distances run through a kd-tree but are bit-equal to
//! the brute-force double loop: pruning is conservative (a partial sum of
//! squared coordinate gaps never exceeds the full squared distance in
//! round-to-nearest arithmetic), the per-pair squared distance is computed by
//! one shared kernel, and min/max involve no accumulation.

use std::collections::BTreeSet;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::system::PiecewiseConstantControl;
use crate::vecn;

/// Finite non-empty set of states approximating a compact subset of ℝⁿ.
/// Points are kept sorted lexicographically and exact duplicates removed, so
/// equal clouds compare equal and iteration order is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    points: Vec<Vec<f64>>,
    resolution: Option<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, mut points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "cloud point",
                    expected: dim,
                    got: p.len(),
                });
            }
            if !vecn::all_finite(p) {
                return Err(Error::InvalidArgument(
                    "cloud points must be finite".into(),
                ));
            }
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup();
        Ok(Self {
            dim,
            points,
            resolution: None,
        })
    }

    pub(crate) fn from_cells(dim: usize, cells: &BTreeSet<Vec<i64>>, resolution: f64) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptyCloud);
        }
        // representative = cell center, a pure function of the cell index
        let points = cells
            .iter()
            .map(|key| {
                key.iter()
                    .map(|&k| (k as f64 + 0.5) * resolution)
                    .collect()
            })
            .collect();
        Ok(Self {
            dim,
            points,
            resolution: Some(resolution),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Dedup resolution the cloud was built with, if any; downstream
    /// tolerance arithmetic reads it from here.
    pub fn resolution(&self) -> Option<f64> {
        self.resolution
    }

    pub fn singleton(point: Vec<f64>) -> Result<Self> {
        let dim = point.len();
        Self::new(dim, vec![point])
    }
}

/// Integer cell index of `x` on the grid of the given resolution. Cells are
/// half-open boxes `[k·res, (k+1)·res)`, so halving the resolution splits
/// every cell exactly in two per axis; refinement levels then nest, which
/// keeps cross-resolution cloud comparisons free of misalignment artifacts.
pub(crate) fn cell_key(x: &[f64], resolution: f64) -> Result<Vec<i64>> {
    x.iter()
        .map(|&v| {
            let scaled = v / resolution;
            if scaled.abs() >= 4.5e15 {
                return Err(Error::InvalidArgument(format!(
                    "value {v} too large for dedup resolution {resolution}"
                )));
            }
            Ok(scaled.floor() as i64)
        })
        .collect()
}

/// Snap points to a grid of the given resolution and keep one representative
/// (the cell center) per occupied cell. Hausdorff distance to the input is at
/// most `resolution·√n/2`.
pub fn quantize_cloud(cloud: &PointCloud, resolution: f64) -> Result<PointCloud> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::InvalidArgument(
            "dedup resolution must be positive".into(),
        ));
    }
    let mut cells = BTreeSet::new();
    for p in cloud.points() {
        cells.insert(cell_key(p, resolution)?);
    }
    PointCloud::from_cells(cloud.dim(), &cells, resolution)
}

// ---------------------------------------------------------------------------
// Nearest-neighbor index
// ---------------------------------------------------------------------------

enum KdNode {
    Leaf {
        start: usize,
        len: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

const KD_LEAF: usize = 16;

struct KdTree<'a> {
    pts: &'a [Vec<f64>],
    order: Vec<u32>,
    nodes: Vec<KdNode>,
    root: usize,
}

impl<'a> KdTree<'a> {
    fn build(pts: &'a [Vec<f64>]) -> Self {
        let mut order: Vec<u32> = (0..pts.len() as u32).collect();
        let mut nodes = Vec::new();
        let root = Self::build_rec(pts, &mut order, 0, pts.len(), &mut nodes);
        Self {
            pts,
            order,
            nodes,
            root,
        }
    }

    fn build_rec(
        pts: &[Vec<f64>],
        order: &mut [u32],
        start: usize,
        end: usize,
        nodes: &mut Vec<KdNode>,
    ) -> usize {
        let len = end - start;
        if len <= KD_LEAF {
            nodes.push(KdNode::Leaf { start, len });
            return nodes.len() - 1;
        }
        let dim_count = pts[0].len();
        let slice = &mut order[start..end];
        // split along the widest extent
        let spread = |d: usize| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in slice.iter() {
                let v = pts[i as usize][d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            hi - lo
        };
        let split_dim = (0..dim_count)
            .map(|d| (d, spread(d)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(d, _)| d)
            .unwrap_or(0);
        let mid = len / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize][split_dim]
                .partial_cmp(&pts[b as usize][split_dim])
                .unwrap()
        });
        let value = pts[slice[mid] as usize][split_dim];
        let left = Self::build_rec(pts, order, start, start + mid, nodes);
        let right = Self::build_rec(pts, order, start + mid, end, nodes);
        nodes.push(KdNode::Split {
            dim: split_dim,
            value,
            left,
            right,
        });
        nodes.len() - 1
    }

    /// Exact squared distance to the nearest stored point.
    fn nearest_sq(&self, q: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(self.root, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[f64], best: &mut f64) {
        match &self.nodes[node] {
            KdNode::Leaf { start, len } => {
                for &i in &self.order[*start..*start + *len] {
                    let d = vecn::sq_dist(q, &self.pts[i as usize]);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            KdNode::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[*dim] - value;
                let (near, far) = if diff <= 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, q, best);
                if diff * diff < *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// max over a ∈ A of min over b ∈ B of ‖a − b‖.
pub fn directed_hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "point clouds",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let tree = KdTree::build(b.points());
    let worst_sq = max_nearest_sq(a.points(), &tree);
    Ok(worst_sq.sqrt())
}

#[cfg(feature = "parallel")]
fn max_nearest_sq(queries: &[Vec<f64>], tree: &KdTree<'_>) -> f64 {
    if queries.len() >= 256 {
        queries
            .par_iter()
            .map(|q| tree.nearest_sq(q))
            .reduce(|| 0.0, f64::max)
    } else {
        queries
            .iter()
            .map(|q| tree.nearest_sq(q))
            .fold(0.0, f64::max)
    }
}

#[cfg(not(feature = "parallel"))]
fn max_nearest_sq(queries: &[Vec<f64>], tree: &KdTree<'_>) -> f64 {
    queries
        .iter()
        .map(|q| tree.nearest_sq(q))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance: the larger of the two directed distances.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// `A ⊆ N_ε(B)` on clouds: directed distance at most ε.
pub fn within_neighborhood(a: &PointCloud, b: &PointCloud, eps: f64) -> Result<bool> {
    Ok(directed_hausdorff(a, b)? <= eps)
}

// ---------------------------------------------------------------------------
// Weak* discrepancy
// ---------------------------------------------------------------------------

/// Vector-valued step function on a window, zero outside its pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() != breakpoints.len() - 1 {
            return Err(Error::InvalidArgument(
                "step function needs k+1 breakpoints for k values".into(),
            ));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "step-function breakpoints must be strictly increasing".into(),
            ));
        }
        let m = values[0].len();
        if m == 0 || values.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidArgument(
                "step-function values must share one positive dimension".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn value_at(&self, s: f64) -> Option<&[f64]> {
        let idx = self.breakpoints.partition_point(|&b| b <= s);
        if idx == 0 || idx > self.values.len() {
            None
        } else {
            Some(&self.values[idx - 1])
        }
    }
}

/// Finite family of L¹ test functions restricted to the experiment window,
/// represented as step functions (dense enough for pairing integrals and
/// integrable in closed form).
#[derive(Debug, Clone)]
pub struct TestFunctionDictionary {
    dim: usize,
    window: f64,
    functions: Vec<StepFunction>,
}

impl TestFunctionDictionary {
    pub fn new(dim: usize, window: f64, functions: Vec<StepFunction>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::InvalidArgument(
                "dictionary needs at least one test function".into(),
            ));
        }
        if !(window > 0.0) {
            return Err(Error::InvalidArgument("window must be positive".into()));
        }
        if functions.iter().any(|f| f.dim() != dim) {
            return Err(Error::DimensionMismatch {
                context: "test function",
                expected: dim,
                got: functions.iter().map(|f| f.dim()).find(|&d| d != dim).unwrap(),
            });
        }
        Ok(Self {
            dim,
            window,
            functions,
        })
    }

    /// Indicators of dyadic subintervals of `[0, window]` up to the given
    /// depth, one per control coordinate: `(2^{depth+1} − 1)·dim` functions.
    pub fn dyadic(dim: usize, window: f64, depth: usize) -> Result<Self> {
        let mut functions = Vec::new();
        for level in 0..=depth {
            let parts = 1usize << level;
            for part in 0..parts {
                let a = window * (part as f64) / (parts as f64);
                let b = window * ((part + 1) as f64) / (parts as f64);
                for coord in 0..dim {
                    let mut e = vec![0.0; dim];
                    e[coord] = 1.0;
                    functions.push(StepFunction::new(vec![a, b], vec![e])?);
                }
            }
        }
        Self::new(dim, window, functions)
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// max over the dictionary of `|∫₀ᵀ ⟨u(s) − v(s), x_i(s)⟩ ds|`, evaluated in
/// closed form by merging the breakpoints of all three step functions.
pub fn weak_star_discrepancy(
    u: &PiecewiseConstantControl,
    v: &PiecewiseConstantControl,
    dict: &TestFunctionDictionary,
) -> Result<f64> {
    let m = dict.dim;
    if u.dim() != m || v.dim() != m {
        return Err(Error::DimensionMismatch {
            context: "weak* pairing",
            expected: m,
            got: if u.dim() != m { u.dim() } else { v.dim() },
        });
    }
    let window = dict.window;
    let mut worst = 0.0f64;
    for f in &dict.functions {
        let mut times: Vec<f64> = vec![0.0, window];
        for &b in u
            .breakpoints()
            .iter()
            .chain(v.breakpoints())
            .chain(f.breakpoints())
        {
            if b > 0.0 && b < window {
                times.push(b);
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let mut integral = 0.0;
        for w in times.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let Some(fv) = f.value_at(mid) else { continue };
            let uv = u.value_at(mid);
            let vv = v.value_at(mid);
            let mut inner = 0.0;
            for i in 0..m {
                inner += (uv[i] - vv[i]) * fv[i];
            }
            integral += (w[1] - w[0]) * inner;
        }
        worst = worst.max(integral.abs());
    }
    Ok(worst)
}

/// ±amplitude square wave with `pieces` equal pieces on `[0, horizon]`,
/// starting positive; the extension value is 0.
pub fn square_wave(
    amplitude: f64,
    pieces: usize,
    horizon: f64,
    dim: usize,
) -> Result<PiecewiseConstantControl> {
    if pieces == 0 {
        return Err(Error::InvalidArgument("need at least one piece".into()));
    }
    let values: Vec<Vec<f64>> = (0..pieces)
        .map(|k| {
            let mut v = vec![0.0; dim];
            v[0] = if k % 2 == 0 { amplitude } else { -amplitude };
            v
        })
        .collect();
    let mut breakpoints: Vec<f64> = (0..pieces)
        .map(|j| (j as f64) * horizon / (pieces as f64))
        .collect();
    breakpoints.push(horizon);
    PiecewiseConstantControl::from_parts(breakpoints, values, vec![0.0; dim])
}
