//! Geometry of the control range: a non-empty compact convex subset of ℝᵐ.
//!
//! Three representations are supported: axis-aligned boxes, Euclidean balls
//! and convex hulls of finite vertex sets. The module provides membership,
//! Euclidean projection, support functions, Hausdorff distance between two
//! ranges, inflation by a margin, deterministic finite nets of control
//! values, and transport of a piecewise-constant control into a nearby range.
//!
//! Hausdorff distances between convex compacts are computed as the maximum
//! support-function gap over a deterministic direction net (the identity
//! `d_H(A,B) = sup_d |h_A(d) − h_B(d)|` is exact for compact convex sets; the
//! finite net can only underestimate, by an amount that shrinks with the net
//! mesh and is bounded against brute force in the tests). In one dimension
//! the two directions ±1 make the computation exact.
//!
//! All operations are pure and `OmegaSet` is immutable, so values can be
//! shared across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::system::PiecewiseConstantControl;
use crate::vecn;

/// Default direction count for support-gap Hausdorff distances.
pub const DEFAULT_DIRECTIONS: usize = 4096;

/// Seed of the shared deterministic direction net (used for m > 3 and for
/// state-space probe directions).
pub const NET_SEED: u64 = 0x5eed_d14e_c710_u64;

/// Iteration cap for the hull projection solver.
const HULL_PROJECTION_MAX_ITERS: usize = 10_000;
/// Distance tolerance for the hull projection solver.
const HULL_PROJECTION_TOL: f64 = 1e-10;

/// A non-empty compact convex subset of ℝᵐ.
#[derive(Debug, Clone, PartialEq)]
pub enum OmegaSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Hull { vertices: Vec<Vec<f64>> },
}

impl OmegaSet {
    pub fn box_set(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(
                "box bounds must be non-empty and of equal dimension".into(),
            ));
        }
        if !vecn::all_finite(&lower) || !vecn::all_finite(&upper) {
            return Err(Error::InvalidArgument("box bounds must be finite".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidArgument(
                "box lower bound exceeds upper bound".into(),
            ));
        }
        Ok(OmegaSet::Box { lower, upper })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !vecn::all_finite(&center) {
            return Err(Error::InvalidArgument(
                "ball center must be non-empty and finite".into(),
            ));
        }
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(
                "ball radius must be finite and non-negative".into(),
            ));
        }
        Ok(OmegaSet::Ball { center, radius })
    }

    pub fn hull(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidArgument(
                "hull needs at least one vertex".into(),
            ));
        }
        let m = vertices[0].len();
        if m == 0
            || vertices.iter().any(|v| v.len() != m)
            || vertices.iter().any(|v| !vecn::all_finite(v))
        {
            return Err(Error::InvalidArgument(
                "hull vertices must be finite and of equal positive dimension".into(),
            ));
        }
        Ok(OmegaSet::Hull { vertices })
    }

    pub fn dim(&self) -> usize {
        match self {
            OmegaSet::Box { lower, .. } => lower.len(),
            OmegaSet::Ball { center, .. } => center.len(),
            OmegaSet::Hull { vertices } => vertices[0].len(),
        }
    }

    fn check_dim(&self, p: &[f64], context: &'static str) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Euclidean distance from `p` to the set (0 inside). Analytic for boxes
    /// and balls, via projection for hulls.
    pub fn distance_to(&self, p: &[f64]) -> Result<f64> {
        self.check_dim(p, "point")?;
        match self {
            OmegaSet::Box { lower, upper } => {
                let mut s = 0.0;
                for i in 0..p.len() {
                    let excess = (lower[i] - p[i]).max(p[i] - upper[i]).max(0.0);
                    s += excess * excess;
                }
                Ok(s.sqrt())
            }
            OmegaSet::Ball { center, radius } => {
                Ok((vecn::dist(p, center) - radius).max(0.0))
            }
            OmegaSet::Hull { .. } => {
                let q = self.project(p)?;
                Ok(vecn::dist(p, &q))
            }
        }
    }

    /// `dist(p, Ω) ≤ tol`.
    pub fn contains(&self, p: &[f64], tol: f64) -> Result<bool> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument("tolerance must be >= 0".into()));
        }
        Ok(self.distance_to(p)? <= tol)
    }

    /// Euclidean nearest point of the set.
    pub fn project(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(p, "point")?;
        if !vecn::all_finite(p) {
            return Err(Error::InvalidArgument("point must be finite".into()));
        }
        match self {
            OmegaSet::Box { lower, upper } => Ok(p
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&x, (&l, &u))| x.clamp(l, u))
                .collect()),
            OmegaSet::Ball { center, radius } => {
                let d = vecn::dist(p, center);
                if d <= *radius {
                    Ok(p.to_vec())
                } else {
                    let scale = radius / d;
                    Ok(center
                        .iter()
                        .zip(p)
                        .map(|(c, x)| c + scale * (x - c))
                        .collect())
                }
            }
            OmegaSet::Hull { vertices } => project_hull(vertices, p),
        }
    }

    /// Support function `h(d) = max_{ω∈Ω} ⟨ω, d⟩` for a unit direction.
    pub fn support(&self, d: &[f64]) -> Result<f64> {
        self.check_dim(d, "direction")?;
        let norm = vecn::norm(d);
        if norm < 1e-12 {
            return Err(Error::InvalidDirection { norm });
        }
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDirection { norm });
        }
        Ok(match self {
            OmegaSet::Box { lower, upper } => d
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&di, (&l, &u))| (di * l).max(di * u))
                .sum(),
            OmegaSet::Ball { center, radius } => vecn::dot(center, d) + radius,
            OmegaSet::Hull { vertices } => vertices
                .iter()
                .map(|v| vecn::dot(v, d))
                .fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// Grow the set by a margin `γ ≥ 0`. Balls grow exactly (radius + γ).
    /// Boxes grow every bound by γ, which over-approximates the Euclidean
    /// γ-neighborhood by at most `γ(√m − 1)`; the over-approximation is
    /// deliberate, so containment-style experiments keep their direction.
    /// Hulls are not supported.
    pub fn inflate(&self, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(Error::InvalidArgument("inflation margin must be >= 0".into()));
        }
        match self {
            OmegaSet::Box { lower, upper } => Ok(OmegaSet::Box {
                lower: lower.iter().map(|l| l - gamma).collect(),
                upper: upper.iter().map(|u| u + gamma).collect(),
            }),
            OmegaSet::Ball { center, radius } => Ok(OmegaSet::Ball {
                center: center.clone(),
                radius: radius + gamma,
            }),
            OmegaSet::Hull { .. } => Err(Error::UnsupportedInflation),
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        match self {
            OmegaSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| 0.5 * (l + u))
                .collect(),
            OmegaSet::Ball { center, .. } => center.clone(),
            OmegaSet::Hull { vertices } => {
                let m = vertices[0].len();
                let mut c = vec![0.0; m];
                for v in vertices {
                    for i in 0..m {
                        c[i] += v[i];
                    }
                }
                for ci in &mut c {
                    *ci /= vertices.len() as f64;
                }
                c
            }
        }
    }

    /// Homothety `c + λ(Ω − c)`; with `0 ≤ λ ≤ 1` and `c` inside the set this
    /// shrinks toward `c` while preserving the variant.
    pub fn homothety(&self, center: &[f64], lambda: f64) -> Result<Self> {
        self.check_dim(center, "homothety center")?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(
                "homothety factor must be finite and >= 0".into(),
            ));
        }
        let map = |x: f64, c: f64| c + lambda * (x - c);
        Ok(match self {
            OmegaSet::Box { lower, upper } => OmegaSet::Box {
                lower: lower.iter().zip(center).map(|(&l, &c)| map(l, c)).collect(),
                upper: upper.iter().zip(center).map(|(&u, &c)| map(u, c)).collect(),
            },
            OmegaSet::Ball { center: bc, radius } => OmegaSet::Ball {
                center: bc.iter().zip(center).map(|(&x, &c)| map(x, c)).collect(),
                radius: lambda * radius,
            },
            OmegaSet::Hull { vertices } => OmegaSet::Hull {
                vertices: vertices
                    .iter()
                    .map(|v| v.iter().zip(center).map(|(&x, &c)| map(x, c)).collect())
                    .collect(),
            },
        })
    }

    /// Maximum distance from `c` to the set (exact per variant).
    pub fn max_distance_from(&self, c: &[f64]) -> Result<f64> {
        self.check_dim(c, "reference point")?;
        Ok(match self {
            OmegaSet::Box { lower, upper } => {
                let mut s = 0.0;
                for i in 0..c.len() {
                    let e = (c[i] - lower[i]).abs().max((upper[i] - c[i]).abs());
                    s += e * e;
                }
                s.sqrt()
            }
            OmegaSet::Ball { center, radius } => vecn::dist(center, c) + radius,
            OmegaSet::Hull { vertices } => vertices
                .iter()
                .map(|v| vecn::dist(v, c))
                .fold(0.0, f64::max),
        })
    }

    /// Deterministic finite subset of the set at resolution `k ≥ 1`.
    ///
    /// Boxes: the uniform grid with `k+1` samples per axis (so corners are
    /// included). Balls: the center plus `k` concentric rings; in the plane
    /// ring `j` carries `8j` angular samples, in higher dimension radial
    /// scalings of the shared direction net are used, and in one dimension
    /// the ring degenerates to `center ± r·j/k`. Hulls: all convex
    /// combinations of the vertices with weights in `{0, 1/k, …, 1}`.
    /// `include_extreme` re-appends box corners / hull vertices before
    /// deduplication.
    pub fn net(&self, k: usize, include_extreme: bool) -> Result<Vec<Vec<f64>>> {
        if k == 0 {
            return Err(Error::InvalidArgument("net resolution must be >= 1".into()));
        }
        let mut pts: Vec<Vec<f64>> = Vec::new();
        match self {
            OmegaSet::Box { lower, upper } => {
                let m = lower.len();
                let per_axis: Vec<Vec<f64>> = (0..m)
                    .map(|i| {
                        (0..=k)
                            .map(|j| lower[i] + (upper[i] - lower[i]) * (j as f64) / (k as f64))
                            .collect()
                    })
                    .collect();
                let mut idx = vec![0usize; m];
                loop {
                    pts.push((0..m).map(|i| per_axis[i][idx[i]]).collect());
                    let mut carry = 0;
                    while carry < m {
                        idx[carry] += 1;
                        if idx[carry] <= k {
                            break;
                        }
                        idx[carry] = 0;
                        carry += 1;
                    }
                    if carry == m {
                        break;
                    }
                }
                if include_extreme {
                    for corner in 0..(1usize << m.min(20)) {
                        pts.push(
                            (0..m)
                                .map(|i| if corner >> i & 1 == 1 { upper[i] } else { lower[i] })
                                .collect(),
                        );
                    }
                }
            }
            OmegaSet::Ball { center, radius } => {
                let m = center.len();
                pts.push(center.clone());
                if *radius > 0.0 {
                    match m {
                        1 => {
                            for j in 1..=k {
                                let r = radius * (j as f64) / (k as f64);
                                pts.push(vec![center[0] - r]);
                                pts.push(vec![center[0] + r]);
                            }
                        }
                        2 => {
                            for j in 1..=k {
                                let r = radius * (j as f64) / (k as f64);
                                let samples = 8 * j;
                                for a in 0..samples {
                                    let theta =
                                        2.0 * std::f64::consts::PI * (a as f64) / (samples as f64);
                                    pts.push(vec![
                                        center[0] + r * theta.cos(),
                                        center[1] + r * theta.sin(),
                                    ]);
                                }
                            }
                        }
                        _ => {
                            let dirs = direction_net(m, (2 * m).max(8), NET_SEED);
                            for j in 1..=k {
                                let r = radius * (j as f64) / (k as f64);
                                for d in &dirs {
                                    pts.push(
                                        center.iter().zip(d).map(|(c, di)| c + r * di).collect(),
                                    );
                                }
                            }
                        }
                    }
                }
            }
            OmegaSet::Hull { vertices } => {
                let nv = vertices.len();
                let m = vertices[0].len();
                // All compositions of k into nv non-negative parts.
                let mut weights = vec![0usize; nv];
                weights[0] = k;
                loop {
                    let mut p = vec![0.0; m];
                    for (w, v) in weights.iter().zip(vertices) {
                        if *w > 0 {
                            let lam = (*w as f64) / (k as f64);
                            for i in 0..m {
                                p[i] += lam * v[i];
                            }
                        }
                    }
                    pts.push(p);
                    if !next_composition(&mut weights) {
                        break;
                    }
                }
                if include_extreme {
                    pts.extend(vertices.iter().cloned());
                }
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        Ok(pts)
    }

    /// Upper estimate of the covering radius of `net(k)` inside the set, used
    /// as a reported slack term. Analytic for boxes; for balls the radial and
    /// angular gaps are combined; for hulls a coarse simplex-grid bound.
    pub fn net_mesh(&self, k: usize) -> f64 {
        let kf = k.max(1) as f64;
        match self {
            OmegaSet::Box { lower, upper } => {
                let mut s = 0.0;
                for (l, u) in lower.iter().zip(upper) {
                    let cell = (u - l) / kf;
                    s += cell * cell;
                }
                0.5 * s.sqrt()
            }
            OmegaSet::Ball { center, radius } => match center.len() {
                1 => 0.5 * radius / kf,
                2 => (0.5 * radius / kf).max(radius * std::f64::consts::PI / (8.0 * kf)),
                _ => *radius, // coarse: sparse direction sets give no tighter bound
            },
            OmegaSet::Hull { vertices } => {
                let mut diam = 0.0f64;
                for (i, a) in vertices.iter().enumerate() {
                    for b in &vertices[i + 1..] {
                        diam = diam.max(vecn::dist(a, b));
                    }
                }
                diam * (vertices.len().saturating_sub(1).max(1) as f64) / (2.0 * kf)
            }
        }
    }
}

/// Advance `weights` to the next composition of the fixed total; returns
/// false when exhausted.
fn next_composition(weights: &mut [usize]) -> bool {
    let n = weights.len();
    if n == 1 {
        return false;
    }
    // Find the first non-zero entry before the last slot, move one unit right.
    let mut i = 0;
    while i < n - 1 && weights[i] == 0 {
        i += 1;
    }
    if i == n - 1 {
        return false;
    }
    let head = weights[i];
    weights[i] = 0;
    weights[0] = head - 1;
    weights[i + 1] += 1;
    true
}

/// Minimum-norm point of the affine hull of the selected points: minimize
/// `‖Σ αᵢ wᵢ‖²` subject to `Σ αᵢ = 1` with free signs, via the KKT system
/// solved by Gaussian elimination. `None` when the points are affinely
/// dependent to working precision.
fn affine_minimizer(w: &[Vec<f64>], corral: &[usize]) -> Option<Vec<f64>> {
    let k = corral.len();
    let mut a = vec![vec![0.0; k + 2]; k + 1];
    for (row, &i) in corral.iter().enumerate() {
        for (col, &j) in corral.iter().enumerate() {
            a[row][col] = 2.0 * vecn::dot(&w[i], &w[j]);
        }
        a[row][k] = 1.0; // multiplier column
        a[row][k + 1] = 0.0;
    }
    for cell in a[k].iter_mut().take(k) {
        *cell = 1.0;
    }
    a[k][k] = 0.0;
    a[k][k + 1] = 1.0;

    let scale = a
        .iter()
        .flat_map(|r| r.iter().map(|v| v.abs()))
        .fold(1.0f64, f64::max);
    for col in 0..=k {
        let pivot = (col..=k)
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())?;
        if a[pivot][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for (row, r) in a.iter_mut().enumerate() {
            if row != col {
                let f = r[col] / pivot_row[col];
                for (cell, pv) in r.iter_mut().zip(&pivot_row).skip(col) {
                    *cell -= f * pv;
                }
            }
        }
    }
    Some((0..k).map(|i| a[i][k + 1] / a[i][i]).collect())
}

/// Projection onto the convex hull of `vertices`: Wolfe's minimum-norm-point
/// iteration over an active vertex set ("corral"), maintaining convex weights
/// and dropping vertices whose weight would cross zero.
fn project_hull(vertices: &[Vec<f64>], p: &[f64]) -> Result<Vec<f64>> {
    let nv = vertices.len();
    let m = p.len();
    let w: Vec<Vec<f64>> = vertices.iter().map(|v| vecn::sub(v, p)).collect();

    let combine = |corral: &[usize], lambda: &[f64], pts: &[Vec<f64>]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (&i, &l) in corral.iter().zip(lambda) {
            for c in 0..m {
                out[c] += l * pts[i][c];
            }
        }
        out
    };

    let start = (0..nv)
        .min_by(|&a, &b| {
            vecn::dot(&w[a], &w[a])
                .partial_cmp(&vecn::dot(&w[b], &w[b]))
                .unwrap()
        })
        .unwrap();
    let mut corral = vec![start];
    let mut lambda = vec![1.0];
    let mut x = w[start].clone();

    for _ in 0..HULL_PROJECTION_MAX_ITERS {
        let xx = vecn::dot(&x, &x);
        if xx <= HULL_PROJECTION_TOL * HULL_PROJECTION_TOL {
            return Ok(combine(&corral, &lambda, vertices));
        }
        let j = (0..nv)
            .min_by(|&a, &b| {
                vecn::dot(&x, &w[a])
                    .partial_cmp(&vecn::dot(&x, &w[b]))
                    .unwrap()
            })
            .unwrap();
        // the gap bounds the distance excess by gap / |x|
        let gap = xx - vecn::dot(&x, &w[j]);
        if gap <= HULL_PROJECTION_TOL * xx.sqrt() || corral.contains(&j) {
            return Ok(combine(&corral, &lambda, vertices));
        }
        corral.push(j);
        lambda.push(0.0);

        // restore convex weights over the corral
        loop {
            let Some(alpha) = affine_minimizer(&w, &corral) else {
                // affinely dependent corral: shed the lightest older vertex
                let drop = (0..corral.len() - 1)
                    .min_by(|&a, &b| lambda[a].partial_cmp(&lambda[b]).unwrap())
                    .unwrap();
                corral.remove(drop);
                lambda.remove(drop);
                if corral.len() == 1 {
                    lambda[0] = 1.0;
                    break;
                }
                continue;
            };
            if alpha.iter().all(|&a| a > 1e-12) {
                lambda = alpha;
                break;
            }
            // walk toward the affine minimizer until a weight hits zero
            let mut theta = 1.0f64;
            for i in 0..corral.len() {
                if alpha[i] < 1e-12 {
                    let denom = lambda[i] - alpha[i];
                    if denom > 0.0 {
                        theta = theta.min(lambda[i] / denom);
                    }
                }
            }
            for i in 0..corral.len() {
                lambda[i] = (1.0 - theta) * lambda[i] + theta * alpha[i];
            }
            let drop = (0..corral.len())
                .min_by(|&a, &b| lambda[a].partial_cmp(&lambda[b]).unwrap())
                .unwrap();
            corral.remove(drop);
            lambda.remove(drop);
            if corral.len() == 1 {
                lambda[0] = 1.0;
                break;
            }
        }
        x = combine(&corral, &lambda, &w);
    }
    Err(Error::ProjectionDiverged {
        iterations: HULL_PROJECTION_MAX_ITERS,
    })
}

/// Deterministic unit-direction net in ℝᵐ.
///
/// m = 1: the two directions ±1. m = 2: a uniform angular grid. m = 3: a
/// Fibonacci sphere. m > 3: the signed coordinate directions topped up with
/// seeded Gaussian directions, so axis-aligned gaps are always covered.
pub fn direction_net(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim >= 1, "direction net needs dim >= 1");
    let count = count.max(2);
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|j| {
                let theta = 2.0 * std::f64::consts::PI * (j as f64) / (count as f64);
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / (count as f64);
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * j as f64;
                    normalize(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut dirs = Vec::with_capacity(count);
            for i in 0..dim {
                for sign in [1.0, -1.0] {
                    let mut d = vec![0.0; dim];
                    d[i] = sign;
                    dirs.push(d);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while dirs.len() < count {
                let d: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
                if vecn::norm(&d) > 1e-6 {
                    dirs.push(normalize(d));
                }
            }
            dirs.truncate(count);
            dirs
        }
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = vecn::norm(&v);
    for x in &mut v {
        *x /= n;
    }
    v
}

/// Box–Muller standard normal from a seeded uniform stream.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Hausdorff distance between two control ranges as the maximum
/// support-function gap over a direction net of the given size.
pub fn omega_hausdorff(a: &OmegaSet, b: &OmegaSet, directions: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "control ranges",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if directions == 0 {
        return Err(Error::InvalidArgument("direction count must be >= 1".into()));
    }
    let dirs = direction_net(a.dim(), directions, NET_SEED);
    let mut best = 0.0f64;
    for d in &dirs {
        let gap = (a.support(d)? - b.support(d)?).abs();
        best = best.max(gap);
    }
    Ok(best)
}

/// Replace every value of `u` (and its extension value) by its nearest point
/// in `target`. When the values of `u` lie in some Ω, each replacement moves
/// by at most `d_H(Ω, target)`.
pub fn transport_control(
    u: &PiecewiseConstantControl,
    target: &OmegaSet,
) -> Result<PiecewiseConstantControl> {
    let values = u
        .values()
        .iter()
        .map(|v| target.project(v))
        .collect::<Result<Vec<_>>>()?;
    let extension = target.project(u.extension())?;
    PiecewiseConstantControl::new(u.breakpoints().to_vec(), values, extension, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn box1(l: f64, u: f64) -> OmegaSet {
        OmegaSet::box_set(vec![l], vec![u]).unwrap()
    }

    fn triangle() -> OmegaSet {
        OmegaSet::hull(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn contains_box_ball_hull() {
        assert!(box1(-1.0, 1.0).contains(&[0.5], 0.0).unwrap());
        assert!(!box1(-1.0, 1.0).contains(&[1.5], 0.0).unwrap());
        let ball = OmegaSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(!ball.contains(&[1.0, 1.0], 0.0).unwrap());
        assert!(ball.contains(&[1.0, 1.0], 2.0f64.sqrt() - 1.0 + 1e-12).unwrap());
        assert!(triangle().contains(&[0.25, 0.25], 1e-9).unwrap());
        assert!(!triangle().contains(&[0.8, 0.8], 1e-3).unwrap());
    }

    /// Brute-force membership for the triangle via a dense barycentric grid.
    #[test]
    fn hull_contains_matches_barycentric_brute_force() {
        let tri = triangle();
        let verts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let grid = 200usize;
        let queries = [
            [0.25, 0.25],
            [0.5, 0.5],
            [0.6, 0.6],
            [-0.1, 0.4],
            [0.33, 0.33],
            [1.0, 0.0],
        ];
        for q in queries {
            let mut best = f64::INFINITY;
            for a in 0..=grid {
                for b in 0..=(grid - a) {
                    let la = a as f64 / grid as f64;
                    let lb = b as f64 / grid as f64;
                    let lc = 1.0 - la - lb;
                    let px = la * verts[0][0] + lb * verts[1][0] + lc * verts[2][0];
                    let py = la * verts[0][1] + lb * verts[1][1] + lc * verts[2][1];
                    let d = ((q[0] - px).powi(2) + (q[1] - py).powi(2)).sqrt();
                    best = best.min(d);
                }
            }
            let computed = tri.distance_to(&q).unwrap();
            // the barycentric grid itself has mesh ~ 1/grid
            assert!(
                (computed - best).abs() <= 1.5 / grid as f64,
                "query {q:?}: computed {computed}, brute {best}"
            );
        }
    }

    #[test]
    fn project_examples() {
        assert_eq!(box1(-1.0, 1.0).project(&[3.0]).unwrap(), vec![1.0]);
        let ball = OmegaSet::ball(vec![0.0, 0.0], 2.0).unwrap();
        let q = ball.project(&[6.0, 8.0]).unwrap();
        assert!((q[0] - 1.2).abs() < 1e-12 && (q[1] - 1.6).abs() < 1e-12);

        let segment = OmegaSet::hull(vec![vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let q = segment.project(&[1.0, 5.0]).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-8 && q[1].abs() < 1e-8);
    }

    /// Dense sampling of the segment as the projection oracle.
    #[test]
    fn hull_projection_matches_dense_sampling() {
        let segment = OmegaSet::hull(vec![vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        for p in [[1.0, 5.0], [-1.0, 1.0], [3.0, -2.0], [0.7, 0.0]] {
            let q = segment.project(&p).unwrap();
            let mut best = f64::INFINITY;
            for j in 0..=20_000 {
                let x = 2.0 * j as f64 / 20_000.0;
                let d = ((p[0] - x).powi(2) + p[1].powi(2)).sqrt();
                best = best.min(d);
            }
            let d_proj = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            assert!(d_proj <= best + 1e-7, "point {p:?}");
        }
    }

    #[test]
    fn support_examples() {
        let sq = OmegaSet::box_set(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(sq.support(&[1.0, 0.0]).unwrap(), 1.0);
        let ball = OmegaSet::ball(vec![1.0, 0.0], 2.0).unwrap();
        assert_eq!(ball.support(&[0.0, 1.0]).unwrap(), 2.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = triangle().support(&[s, s]).unwrap();
        assert!((h - s).abs() < 1e-12);
        assert!(matches!(
            sq.support(&[0.0, 0.0]),
            Err(Error::InvalidDirection { .. })
        ));
        assert!(sq.support(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn hausdorff_closed_forms() {
        let a = box1(-1.0, 1.0);
        let b = box1(-2.0, 2.0);
        assert_eq!(omega_hausdorff(&a, &b, 2).unwrap(), 1.0);
        assert_eq!(omega_hausdorff(&a, &a, 2).unwrap(), 0.0);

        let sq = OmegaSet::box_set(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let sq2 = OmegaSet::box_set(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let d = omega_hausdorff(&sq, &sq2, DEFAULT_DIRECTIONS).unwrap();
        assert!((d - 2.0f64.sqrt()).abs() < 1e-3);

        // brute-force direction grid confirms the net value from below
        let mut brute = 0.0f64;
        for j in 0..100_000 {
            let th = 2.0 * std::f64::consts::PI * j as f64 / 100_000.0;
            let d = [th.cos(), th.sin()];
            brute = brute.max((sq.support(&d).unwrap() - sq2.support(&d).unwrap()).abs());
        }
        assert!(d <= brute + 1e-12 && brute - d < 1e-6);
    }

    #[test]
    fn inflate_rules() {
        let b = box1(-1.0, 1.0).inflate(0.5).unwrap();
        assert_eq!(b, box1(-1.5, 1.5));
        let ball = OmegaSet::ball(vec![0.0], 1.0).unwrap();
        assert_eq!(
            ball.inflate(0.5).unwrap(),
            OmegaSet::ball(vec![0.0], 1.5).unwrap()
        );
        let same = box1(-1.0, 1.0).inflate(0.0).unwrap();
        assert_eq!(same, box1(-1.0, 1.0));
        assert!(matches!(
            triangle().inflate(0.1),
            Err(Error::UnsupportedInflation)
        ));
    }

    #[test]
    fn net_examples() {
        let pts = box1(-1.0, 1.0).net(2, true).unwrap();
        assert_eq!(pts, vec![vec![-1.0], vec![0.0], vec![1.0]]);

        let ball = OmegaSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let pts = ball.net(1, false).unwrap();
        assert!(pts.contains(&vec![0.0, 0.0]));
        assert!(pts
            .iter()
            .any(|p| (vecn::norm(p) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn net_points_are_members() {
        let sets = [
            box1(-1.0, 2.0),
            OmegaSet::box_set(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap(),
            OmegaSet::ball(vec![0.5], 2.0).unwrap(),
            OmegaSet::ball(vec![1.0, -1.0], 0.7).unwrap(),
            OmegaSet::ball(vec![0.0, 0.0, 0.0, 0.0], 1.0).unwrap(),
            triangle(),
        ];
        for omega in &sets {
            for k in [1, 2, 3] {
                for p in omega.net(k, true).unwrap() {
                    assert!(
                        omega.contains(&p, 1e-9).unwrap(),
                        "{omega:?} k={k} point {p:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn degenerate_sets_supported() {
        let point = OmegaSet::box_set(vec![2.0], vec![2.0]).unwrap();
        assert_eq!(point.net(3, true).unwrap(), vec![vec![2.0]]);
        let zero_ball = OmegaSet::ball(vec![1.0, 1.0], 0.0).unwrap();
        assert_eq!(zero_ball.net(2, true).unwrap(), vec![vec![1.0, 1.0]]);
        assert_eq!(zero_ball.project(&[5.0, 5.0]).unwrap(), vec![1.0, 1.0]);
        let flat = OmegaSet::box_set(vec![-1.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert!(flat.contains(&[0.3, 0.0], 0.0).unwrap());
    }

    #[test]
    fn transport_examples() {
        let omega = box1(-3.0, 3.0);
        let u = PiecewiseConstantControl::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![-2.0], vec![2.0]],
            vec![0.0],
            &omega,
        )
        .unwrap();
        // same range: unchanged
        let same = transport_control(&u, &omega).unwrap();
        assert_eq!(same, u);
        // clamp into a smaller range
        let narrow = box1(-1.0, 1.0);
        let t = transport_control(&u, &narrow).unwrap();
        assert_eq!(t.values(), &[vec![-1.0], vec![1.0]]);
        // inflation contains the original: unchanged
        let wide = omega.inflate(0.5).unwrap();
        let t = transport_control(&u, &wide).unwrap();
        assert_eq!(t.values(), u.values());
    }

    #[test]
    fn transport_contraction_bound() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let c1: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c2: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = OmegaSet::ball(c1, rng.gen_range(0.2..1.5)).unwrap();
            let b = OmegaSet::ball(c2, rng.gen_range(0.2..1.5)).unwrap();
            let values: Vec<Vec<f64>> = a.net(2, true).unwrap();
            let u = PiecewiseConstantControl::uniform_unchecked(1.0, values.clone()).unwrap();
            let t = transport_control(&u, &b).unwrap();
            let dh = omega_hausdorff(&a, &b, DEFAULT_DIRECTIONS).unwrap();
            for (orig, moved) in u.values().iter().zip(t.values()) {
                let shift = vecn::dist(orig, moved);
                assert!(shift <= dh + 1e-6, "shift {shift} > d_H {dh}");
            }
        }
    }

    #[test]
    fn direction_net_shapes() {
        assert_eq!(direction_net(1, 64, NET_SEED).len(), 2);
        for d in direction_net(2, 128, NET_SEED) {
            assert!((vecn::norm(&d) - 1.0).abs() < 1e-12);
        }
        for d in direction_net(3, 257, NET_SEED) {
            assert!((vecn::norm(&d) - 1.0).abs() < 1e-9);
        }
        let d5 = direction_net(5, 64, NET_SEED);
        assert_eq!(d5.len(), 64);
        // deterministic
        assert_eq!(d5, direction_net(5, 64, NET_SEED));
        // contains ±e_i
        for i in 0..5 {
            let mut e = vec![0.0; 5];
            e[i] = 1.0;
            assert!(d5.contains(&e));
        }
    }

    fn arb_omega(dim: usize) -> impl Strategy<Value = OmegaSet> {
        let b = (
            proptest::collection::vec(-2.0f64..0.0, dim),
            proptest::collection::vec(0.0f64..2.0, dim),
        )
            .prop_map(|(l, u)| OmegaSet::box_set(l, u).unwrap());
        let ball = (
            proptest::collection::vec(-1.0f64..1.0, dim),
            0.0f64..2.0,
        )
            .prop_map(|(c, r)| OmegaSet::ball(c, r).unwrap());
        let hull = proptest::collection::vec(
            proptest::collection::vec(-2.0f64..2.0, dim),
            1..5,
        )
        .prop_map(|vs| OmegaSet::hull(vs).unwrap());
        prop_oneof![b, ball, hull]
    }

    proptest! {
        #[test]
        fn projection_idempotent(omega in arb_omega(2), p in proptest::collection::vec(-5.0f64..5.0, 2)) {
            let q = omega.project(&p).unwrap();
            let qq = omega.project(&q).unwrap();
            prop_assert!(vecn::dist(&q, &qq) <= 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn projection_is_nearest_among_net_points(
            omega in arb_omega(2),
            p in proptest::collection::vec(-5.0f64..5.0, 2),
        ) {
            let q = omega.project(&p).unwrap();
            let dq = vecn::dist(&p, &q);
            for candidate in omega.net(8, true).unwrap() {
                prop_assert!(dq <= vecn::dist(&p, &candidate) + 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn hausdorff_metric_axioms(
            a in arb_omega(2),
            b in arb_omega(2),
            c in arb_omega(2),
        ) {
            let dab = omega_hausdorff(&a, &b, 512).unwrap();
            let dba = omega_hausdorff(&b, &a, 512).unwrap();
            prop_assert!((dab - dba).abs() <= 1e-12);
            prop_assert_eq!(omega_hausdorff(&a, &a, 512).unwrap(), 0.0);
            let dac = omega_hausdorff(&a, &c, 512).unwrap();
            let dcb = omega_hausdorff(&c, &b, 512).unwrap();
            prop_assert!(dab <= dac + dcb + 1e-9);
        }

        /// h is 1-homogeneous: evaluating on the normalized direction and
        /// scaling back is linear (checked analytically on boxes and balls).
        #[test]
        fn support_box_scales(lu in (0.5f64..2.0, 0.5f64..2.0), lam in 0.5f64..4.0) {
            let omega = OmegaSet::box_set(vec![-lu.0, -lu.1], vec![lu.0, lu.1]).unwrap();
            let d = normalize(vec![1.0, 1.0]);
            let h = omega.support(&d).unwrap();
            // h(λd) for the un-normalized direction λd equals λ·h(d)
            let ld: Vec<f64> = d.iter().map(|x| lam * x).collect();
            let h_manual: f64 = ld
                .iter()
                .zip([-lu.0, -lu.1].iter().zip([lu.0, lu.1].iter()))
                .map(|(&di, (&l, &u))| (di * l).max(di * u))
                .sum();
            prop_assert!((h_manual - lam * h).abs() <= 1e-9 * h_manual.abs().max(1.0));
        }
    }
}
