//! Continuity experiments on reachable clouds and functional extremization.
//!
//! A sweep perturbs one input of the reachable-set map (the control range,
//! the horizon, the start state, or all three jointly) over a list of
//! perturbation sizes and records the Hausdorff distance between the base
//! cloud and each perturbed cloud. Continuity is checked as a quantitative
//! trend (distances shrink with the perturbation, within an explicit slack
//! budget), not as a literal ε–δ statement: clouds are discrete, so the
//! verdicts report empirical moduli with every discretization term itemized.
//!
//! Slack budget = cloud dedup term + an RK4 error estimate from step halving
//! + control-net mesh × horizon × the largest controlled-field norm seen.
//!
//! Verdicts are pure functions of the rows and the declared budget, so a
//! report can be re-checked from its emitted CSV alone.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::integrate::flow_endpoint;
use crate::metric::{directed_hausdorff, hausdorff, within_neighborhood, PointCloud};
use crate::omega::{direction_net, omega_hausdorff, OmegaSet, DEFAULT_DIRECTIONS, NET_SEED};
use crate::reach::{reachable_cloud, reachable_clouds_at, ReachSpec};
use crate::system::{ControlAffineSystem, PiecewiseConstantControl};
use crate::vecn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Omega,
    Time,
    State,
    Joint,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::Omega => "omega",
            SweepKind::Time => "time",
            SweepKind::State => "state",
            SweepKind::Joint => "joint",
        }
    }
}

/// One perturbation row. `dir_ab`/`dir_ba` are the directed distances of the
/// pair behind `rho_h` (for time sweeps they are the two nesting directions,
/// which should vanish up to dedup).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub rho_h: f64,
    pub dir_ab: f64,
    pub dir_ba: f64,
    pub slack: f64,
}

/// Itemized discretization allowance added to continuity verdicts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackBudget {
    /// Dedup-grid term: both clouds may move each point by half a cell
    /// diagonal.
    pub dedup: f64,
    /// RK4 endpoint error estimate from step halving (Richardson).
    pub integrator: f64,
    /// Control-net mesh × horizon × max controlled-field norm.
    pub net: f64,
    /// The raw dedup resolution, for exact-nesting checks.
    pub dedup_resolution: f64,
    /// Largest ‖rhs‖ over cloud × net values; present for time sweeps.
    pub max_speed: Option<f64>,
}

impl SlackBudget {
    pub fn total(&self) -> f64 {
        self.dedup + self.integrator + self.net
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub passed: bool,
    /// Distances do not grow as the perturbation shrinks (up to slack).
    pub trend_ok: bool,
    /// Kind-specific distance bound per row.
    pub bound_ok: bool,
    /// Time sweeps: the shrinking side is contained up to the dedup grid.
    pub nesting_ok: Option<bool>,
    /// Joint sweeps: the three-term decomposition bounds the joint distance.
    pub triangle_ok: Option<bool>,
    /// Omega sweeps: empirical modulus `max rho_h / delta`.
    pub empirical_modulus: Option<f64>,
}

/// Joint-sweep decomposition of one row: the joint distance and the three
/// single-variable legs between the intermediate clouds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangleRow {
    pub delta: f64,
    pub d_joint: f64,
    pub d_state: f64,
    pub d_omega: f64,
    pub d_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    pub slack: SlackBudget,
    pub verdict: Verdict,
    pub triangle: Option<Vec<TriangleRow>>,
    /// The unperturbed cloud, kept for plotting dumps.
    pub base_cloud: PointCloud,
    /// Per row, the perturbed cloud behind `rho_h`.
    pub row_clouds: Vec<PointCloud>,
}

impl SweepReport {
    /// `delta,rho_h,dir_ab,dir_ba,slack` rows, sorted by delta ascending.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("delta,rho_h,dir_ab,dir_ba,slack\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.delta, r.rho_h, r.dir_ab, r.dir_ba, r.slack
            );
        }
        out
    }

    pub fn verdict_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            kind: &'a str,
            verdict: &'a Verdict,
            slack: &'a SlackBudget,
            row_count: usize,
            triangle: &'a Option<Vec<TriangleRow>>,
        }
        serde_json::to_string_pretty(&Doc {
            kind: self.kind.as_str(),
            verdict: &self.verdict,
            slack: &self.slack,
            row_count: self.rows.len(),
            triangle: &self.triangle,
        })
        .expect("report serialization")
    }
}

/// Re-parse rows emitted by [`SweepReport::rows_csv`].
pub fn parse_rows_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "delta,rho_h,dir_ab,dir_ba,slack" {
                return Err(Error::InvalidArgument(format!(
                    "unexpected rows header `{line}`"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad row field `{f}`")))
            })
            .collect::<Result<_>>()?;
        if fields.len() != 5 {
            return Err(Error::InvalidArgument(format!(
                "row {i} has {} fields, expected 5",
                fields.len()
            )));
        }
        rows.push(SweepRow {
            delta: fields[0],
            rho_h: fields[1],
            dir_ab: fields[2],
            dir_ba: fields[3],
            slack: fields[4],
        });
    }
    Ok(rows)
}

/// Pure verdict rule: recomputable from the emitted rows and declared budget.
pub fn evaluate_verdict(
    kind: SweepKind,
    rows: &[SweepRow],
    slack: &SlackBudget,
    triangle: Option<&[TriangleRow]>,
) -> Verdict {
    let total = slack.total();
    let trend_ok = rows
        .windows(2)
        .all(|w| w[0].rho_h <= w[1].rho_h + total);
    let mut verdict = Verdict {
        passed: false,
        trend_ok,
        bound_ok: true,
        nesting_ok: None,
        triangle_ok: None,
        empirical_modulus: None,
    };
    match kind {
        SweepKind::Omega => {
            let modulus = rows
                .iter()
                .map(|r| r.rho_h / r.delta)
                .fold(0.0f64, f64::max);
            verdict.empirical_modulus = Some(modulus);
            verdict.bound_ok = rows
                .first()
                .map(|r| r.rho_h <= modulus * r.delta + total)
                .unwrap_or(true);
            verdict.passed = verdict.trend_ok && verdict.bound_ok;
        }
        SweepKind::Time => {
            let speed = slack.max_speed.unwrap_or(f64::INFINITY);
            verdict.bound_ok = rows.iter().all(|r| r.rho_h <= speed * r.delta + total);
            let nesting = rows
                .iter()
                .all(|r| r.dir_ab <= slack.dedup_resolution && r.dir_ba <= slack.dedup_resolution);
            verdict.nesting_ok = Some(nesting);
            verdict.passed = verdict.trend_ok && verdict.bound_ok && nesting;
        }
        SweepKind::State => {
            verdict.passed = verdict.trend_ok;
        }
        SweepKind::Joint => {
            let tri = triangle.map(|rows| {
                rows.iter()
                    .all(|r| r.d_joint <= r.d_state + r.d_omega + r.d_time + 1e-9)
            });
            verdict.triangle_ok = tri;
            verdict.passed = tri.unwrap_or(false);
        }
    }
    verdict
}

fn sorted_positive_deltas(deltas: &[f64]) -> Result<Vec<f64>> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("need at least one delta".into()));
    }
    if deltas.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidArgument("deltas must be positive".into()));
    }
    let mut ds = deltas.to_vec();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ds.dedup();
    Ok(ds)
}

/// Slack budget for experiments built on `spec` at the given horizon.
pub fn slack_budget(
    system: &ControlAffineSystem,
    x0: &[f64],
    t: f64,
    omega: &OmegaSet,
    spec: &ReachSpec,
) -> Result<SlackBudget> {
    let n = system.state_dim() as f64;
    let dedup = spec.dedup_resolution * n.sqrt();

    // Richardson estimate on extreme constant controls, and the largest
    // controlled-field norm along those probes.
    let extremes = omega.net(1, true)?;
    let mut probes: Vec<&Vec<f64>> = vec![extremes.first().unwrap()];
    if extremes.len() > 1 {
        probes.push(extremes.last().unwrap());
    }
    let mut integrator = 0.0f64;
    let mut field_norm = 0.0f64;
    for value in probes {
        let control = PiecewiseConstantControl::uniform_unchecked(t, vec![value.clone()])?;
        let coarse = flow_endpoint(system, x0, &control, t, spec.step)?;
        let fine = crate::integrate::integrate_trajectory(
            system,
            x0,
            &control,
            t,
            spec.step / 2.0,
        )?;
        let est = vecn::dist(&coarse, fine.final_state()) * 16.0 / 15.0;
        integrator = integrator.max(est);
        for state in fine.states() {
            for field in system.controlled_fields() {
                let mut s = 0.0;
                for component in field {
                    let v = component.eval(state)?;
                    s += v * v;
                }
                field_norm = field_norm.max(s.sqrt());
            }
        }
    }
    let net = omega.net_mesh(spec.value_resolution) * t * field_norm;

    Ok(SlackBudget {
        dedup,
        integrator,
        net,
        dedup_resolution: spec.dedup_resolution,
        max_speed: None,
    })
}

/// Outward perturbation with Hausdorff distance calibrated to `delta`
/// (box inflation moves the support gap by `γ√m` at the diagonal, so the
/// margin is scaled down accordingly).
fn inflate_to_distance(omega: &OmegaSet, delta: f64) -> Result<OmegaSet> {
    let factor = match omega {
        OmegaSet::Box { lower, .. } => (lower.len() as f64).sqrt(),
        _ => 1.0,
    };
    let out = omega.inflate(delta / factor)?;
    let measured = omega_hausdorff(omega, &out, DEFAULT_DIRECTIONS)?;
    if measured > delta * (1.0 + 1e-6) {
        return Err(Error::InvalidArgument(format!(
            "outward perturbation overshot: d_H = {measured} > {delta}"
        )));
    }
    Ok(out)
}

/// Inward perturbation: homothety toward the centroid with 1−λ = δ/R.
fn shrink_to_distance(omega: &OmegaSet, delta: f64) -> Result<OmegaSet> {
    let centroid = omega.centroid();
    let radius = omega.max_distance_from(&centroid)?;
    if radius <= 0.0 {
        return Ok(omega.clone());
    }
    let lambda = (1.0 - delta / radius).max(0.0);
    let inner = omega.homothety(&centroid, lambda)?;
    let measured = omega_hausdorff(omega, &inner, DEFAULT_DIRECTIONS)?;
    if measured > delta * (1.0 + 1e-6) {
        return Err(Error::InvalidArgument(format!(
            "inward perturbation overshot: d_H = {measured} > {delta}"
        )));
    }
    Ok(inner)
}

/// Continuity of the cloud in the control range: perturb outward (inflation)
/// and inward (homothety toward the centroid), both calibrated to Hausdorff
/// distance ≤ δ, and record the worse of the two cloud distances.
pub fn sweep_omega(
    system: &ControlAffineSystem,
    x0: &[f64],
    t: f64,
    omega: &OmegaSet,
    deltas: &[f64],
    spec: &ReachSpec,
) -> Result<SweepReport> {
    let ds = sorted_positive_deltas(deltas)?;
    let slack = slack_budget(system, x0, t, omega, spec)?;
    let base = reachable_cloud(system, x0, t, omega, spec)?;
    let total = slack.total();
    let mut rows = Vec::with_capacity(ds.len());
    let mut row_clouds = Vec::with_capacity(ds.len());
    for &delta in &ds {
        let outer = inflate_to_distance(omega, delta)?;
        let inner = shrink_to_distance(omega, delta)?;
        let cloud_out = reachable_cloud(system, x0, t, &outer, spec)?;
        let cloud_in = reachable_cloud(system, x0, t, &inner, spec)?;
        let rho_out = hausdorff(&base, &cloud_out)?;
        let rho_in = hausdorff(&base, &cloud_in)?;
        let worse = if rho_out >= rho_in { cloud_out } else { cloud_in };
        rows.push(SweepRow {
            delta,
            rho_h: rho_out.max(rho_in),
            dir_ab: directed_hausdorff(&base, &worse)?,
            dir_ba: directed_hausdorff(&worse, &base)?,
            slack: total,
        });
        row_clouds.push(worse);
    }
    let verdict = evaluate_verdict(SweepKind::Omega, &rows, &slack, None);
    Ok(SweepReport {
        kind: SweepKind::Omega,
        rows,
        slack,
        verdict,
        triangle: None,
        base_cloud: base,
        row_clouds,
    })
}

/// Continuity of the cloud in the horizon. All clouds come from one pass on
/// shared switching and integration grids, so the shorter-horizon cloud is an
/// exact subset of the longer one and the nesting columns vanish up to dedup.
pub fn sweep_time(
    system: &ControlAffineSystem,
    x0: &[f64],
    t: f64,
    deltas: &[f64],
    omega: &OmegaSet,
    spec: &ReachSpec,
) -> Result<SweepReport> {
    let ds = sorted_positive_deltas(deltas)?;
    let d_max = *ds.last().unwrap();
    if t - d_max <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "largest delta {d_max} reaches past the horizon {t}"
        )));
    }
    let mut slack = slack_budget(system, x0, t + d_max, omega, spec)?;

    let mut cuts = vec![t];
    for &d in &ds {
        cuts.push(t - d);
        cuts.push(t + d);
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let clouds = reachable_clouds_at(system, x0, &cuts, omega, spec)?;
    let cloud_at = |time: f64| -> &PointCloud {
        let idx = cuts.iter().position(|&c| c == time).expect("cut present");
        &clouds[idx]
    };

    // sup ‖rhs‖ over the largest cloud and all net control values
    let net = omega.net(spec.value_resolution, true)?;
    let largest = clouds.last().unwrap();
    let mut max_speed = 0.0f64;
    for x in largest.points() {
        for u in &net {
            max_speed = max_speed.max(vecn::norm(&system.rhs(x, u)?));
        }
    }
    slack.max_speed = Some(max_speed);
    let total = slack.total();

    let base = cloud_at(t);
    let mut rows = Vec::with_capacity(ds.len());
    let mut row_clouds = Vec::with_capacity(ds.len());
    for &delta in &ds {
        let shorter = cloud_at(t - delta);
        let longer = cloud_at(t + delta);
        let rho_s = hausdorff(base, shorter)?;
        let rho_l = hausdorff(base, longer)?;
        rows.push(SweepRow {
            delta,
            rho_h: rho_s.max(rho_l),
            dir_ab: directed_hausdorff(shorter, base)?,
            dir_ba: directed_hausdorff(base, longer)?,
            slack: total,
        });
        row_clouds.push(if rho_s >= rho_l { shorter.clone() } else { longer.clone() });
    }
    let verdict = evaluate_verdict(SweepKind::Time, &rows, &slack, None);
    Ok(SweepReport {
        kind: SweepKind::Time,
        rows,
        slack,
        verdict,
        triangle: None,
        base_cloud: base.clone(),
        row_clouds,
    })
}

/// Probe directions in state space, from the shared deterministic net.
fn state_probes(dim: usize, probes: usize) -> Vec<Vec<f64>> {
    let dirs = direction_net(dim, probes.max(2), NET_SEED);
    dirs.into_iter().take(probes.max(1)).collect()
}

/// Continuity of the cloud in the start state: for each δ, probe seeded
/// directions at distance δ and take the worst cloud distance.
pub fn sweep_state(
    system: &ControlAffineSystem,
    t: f64,
    omega: &OmegaSet,
    x0: &[f64],
    deltas: &[f64],
    spec: &ReachSpec,
    probes: usize,
) -> Result<SweepReport> {
    let ds = sorted_positive_deltas(deltas)?;
    if probes == 0 {
        return Err(Error::InvalidArgument("need at least one probe".into()));
    }
    let slack = slack_budget(system, x0, t, omega, spec)?;
    let total = slack.total();
    let base = reachable_cloud(system, x0, t, omega, spec)?;
    let directions = state_probes(system.state_dim(), probes);

    let mut rows = Vec::with_capacity(ds.len());
    let mut row_clouds = Vec::with_capacity(ds.len());
    for &delta in &ds {
        let mut worst = SweepRow {
            delta,
            rho_h: -1.0,
            dir_ab: 0.0,
            dir_ba: 0.0,
            slack: total,
        };
        let mut worst_cloud = None;
        for dir in &directions {
            let y: Vec<f64> = x0.iter().zip(dir).map(|(x, d)| x + delta * d).collect();
            let cloud = reachable_cloud(system, &y, t, omega, spec)?;
            let rho = hausdorff(&base, &cloud)?;
            if rho > worst.rho_h {
                worst.rho_h = rho;
                worst.dir_ab = directed_hausdorff(&base, &cloud)?;
                worst.dir_ba = directed_hausdorff(&cloud, &base)?;
                worst_cloud = Some(cloud);
            }
        }
        rows.push(worst);
        row_clouds.push(worst_cloud.expect("at least one probe"));
    }
    let verdict = evaluate_verdict(SweepKind::State, &rows, &slack, None);
    Ok(SweepReport {
        kind: SweepKind::State,
        rows,
        slack,
        verdict,
        triangle: None,
        base_cloud: base,
        row_clouds,
    })
}

/// Perturb horizon, start state and control range together by δ and compare
/// the joint distance against the chain through the three intermediate
/// clouds (state leg, range leg, time leg).
pub fn joint_sweep(
    system: &ControlAffineSystem,
    x0: &[f64],
    t: f64,
    omega: &OmegaSet,
    deltas: &[f64],
    spec: &ReachSpec,
) -> Result<SweepReport> {
    let ds = sorted_positive_deltas(deltas)?;
    let slack = slack_budget(system, x0, t, omega, spec)?;
    let total = slack.total();
    let base = reachable_cloud(system, x0, t, omega, spec)?;
    let probe = state_probes(system.state_dim(), 1).pop().unwrap();

    let mut rows = Vec::with_capacity(ds.len());
    let mut triangle = Vec::with_capacity(ds.len());
    let mut row_clouds = Vec::with_capacity(ds.len());
    for &delta in &ds {
        let t2 = t + delta;
        let x2: Vec<f64> = x0.iter().zip(&probe).map(|(x, d)| x + delta * d).collect();
        let omega2 = inflate_to_distance(omega, delta)?;

        let joint = reachable_cloud(system, &x2, t2, &omega2, spec)?;
        let state_leg = reachable_cloud(system, x0, t2, &omega2, spec)?;
        let omega_leg = reachable_cloud(system, x0, t2, omega, spec)?;

        let d_joint = hausdorff(&joint, &base)?;
        let d_state = hausdorff(&joint, &state_leg)?;
        let d_omega = hausdorff(&state_leg, &omega_leg)?;
        let d_time = hausdorff(&omega_leg, &base)?;

        rows.push(SweepRow {
            delta,
            rho_h: d_joint,
            dir_ab: directed_hausdorff(&joint, &base)?,
            dir_ba: directed_hausdorff(&base, &joint)?,
            slack: total,
        });
        triangle.push(TriangleRow {
            delta,
            d_joint,
            d_state,
            d_omega,
            d_time,
        });
        row_clouds.push(joint);
    }
    let verdict = evaluate_verdict(SweepKind::Joint, &rows, &slack, Some(&triangle));
    Ok(SweepReport {
        kind: SweepKind::Joint,
        rows,
        slack,
        verdict,
        triangle: Some(triangle),
        base_cloud: base,
        row_clouds,
    })
}

/// Exact extremes of a scalar functional over a finite cloud.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremes {
    pub min_value: f64,
    pub argmin: Vec<f64>,
    pub max_value: f64,
    pub argmax: Vec<f64>,
}

/// Scan the cloud (stored in lexicographic order); ties keep the
/// lexicographically smallest point, so results are deterministic and
/// invariant under strictly increasing reparameterizations of the functional.
pub fn extremize_functional(functional: &Expr, cloud: &PointCloud) -> Result<Extremes> {
    let mut min_value = f64::INFINITY;
    let mut max_value = f64::NEG_INFINITY;
    let mut argmin = cloud.points()[0].clone();
    let mut argmax = argmin.clone();
    for p in cloud.points() {
        let v = functional.eval(p)?;
        if v < min_value {
            min_value = v;
            argmin = p.clone();
        }
        if v > max_value {
            max_value = v;
            argmax = p.clone();
        }
    }
    Ok(Extremes {
        min_value,
        argmin,
        max_value,
        argmax,
    })
}

/// With `Ω₁ ⊆ Ω₂` (verified on the net points), the smaller-range cloud lies
/// inside the ε-neighborhood of the larger-range cloud, ε = slack total.
pub fn monotonicity_check(
    system: &ControlAffineSystem,
    x0: &[f64],
    t: f64,
    omega1: &OmegaSet,
    omega2: &OmegaSet,
    spec: &ReachSpec,
) -> Result<bool> {
    for p in omega1.net(spec.value_resolution, true)? {
        if !omega2.contains(&p, 1e-9)? {
            return Err(Error::InvalidArgument(format!(
                "smaller range is not contained in the larger one (net point {p:?} escapes)"
            )));
        }
    }
    let slack = slack_budget(system, x0, t, omega2, spec)?;
    let c1 = reachable_cloud(system, x0, t, omega1, spec)?;
    let c2 = reachable_cloud(system, x0, t, omega2, spec)?;
    within_neighborhood(&c1, &c2, slack.total())
}
