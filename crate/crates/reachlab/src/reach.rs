//! Point-cloud approximation of the set of states reachable within a time
//! horizon.
//!
//! Controls are sampled as step functions on a uniform switching grid, with
//! values drawn from a finite net of the control range. Every integration
//! grid state enters the cloud (the reachable set up to time `t` is the union
//! over all intermediate times, and endpoint-only sampling would under-cover
//! interior times), then points are snapped to a dedup grid. Uniform
//! switching grids make level-to-level refinement nest exactly.
//!
//! Trajectory integrations are independent; with the `parallel` feature the
//! sequence loop runs on rayon. Cloud assembly merges per-worker cell sets,
//! which is associative and idempotent, so the result is bit-identical
//! regardless of thread count or schedule.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrate::integrate_trajectory;
use crate::metric::{cell_key, hausdorff, PointCloud};
use crate::omega::OmegaSet;
use crate::system::{ControlAffineSystem, PiecewiseConstantControl};

/// Default cap on the number of integrated control sequences.
pub const DEFAULT_BUDGET: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum SampleMode {
    /// Every combination of net values, one per switching piece.
    Exhaustive,
    /// `samples` sequences with value indices drawn from a seeded generator.
    Random { seed: u64, samples: usize },
}

/// Sampling plan for one reachable-cloud construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachSpec {
    /// Number of constant pieces on the uniform switching grid.
    pub switch_count: usize,
    /// Resolution passed to the control-range net.
    pub value_resolution: usize,
    /// Integration step.
    pub step: f64,
    /// Cloud dedup resolution.
    pub dedup_resolution: f64,
    pub mode: SampleMode,
    /// Hard cap on integrated sequences.
    pub budget: u64,
}

impl ReachSpec {
    pub fn new(switch_count: usize, value_resolution: usize, step: f64, dedup: f64) -> Self {
        Self {
            switch_count,
            value_resolution,
            step,
            dedup_resolution: dedup,
            mode: SampleMode::Exhaustive,
            budget: DEFAULT_BUDGET,
        }
    }

    pub fn with_mode(mut self, mode: SampleMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.switch_count == 0 {
            return Err(Error::InvalidArgument("switch count must be >= 1".into()));
        }
        if self.value_resolution == 0 {
            return Err(Error::InvalidArgument(
                "value resolution must be >= 1".into(),
            ));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidArgument("step must be positive".into()));
        }
        if !(self.dedup_resolution > 0.0) || !self.dedup_resolution.is_finite() {
            return Err(Error::InvalidArgument(
                "dedup resolution must be positive".into(),
            ));
        }
        if self.budget == 0 {
            return Err(Error::InvalidArgument("budget must be >= 1".into()));
        }
        if let SampleMode::Random { samples, .. } = self.mode {
            if samples == 0 {
                return Err(Error::InvalidArgument("sample count must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// One refinement level: double the switching grid, one more net level,
    /// halve the step and the dedup resolution. In random mode the sample
    /// count doubles as well: the sequence space grows with the switching
    /// grid, and a fixed draw count would dilute coverage as levels refine.
    pub fn refine(&self) -> ReachSpec {
        let mode = match self.mode {
            SampleMode::Exhaustive => SampleMode::Exhaustive,
            SampleMode::Random { seed, samples } => SampleMode::Random {
                seed,
                samples: samples * 2,
            },
        };
        ReachSpec {
            switch_count: self.switch_count * 2,
            value_resolution: self.value_resolution + 1,
            step: self.step / 2.0,
            dedup_resolution: self.dedup_resolution / 2.0,
            mode,
            budget: self.budget,
        }
    }
}

/// Value-index sequences to integrate, decoded on demand.
enum SequencePlan {
    Exhaustive { net_len: usize, pieces: usize },
    Random { draws: Vec<Vec<usize>> },
}

impl SequencePlan {
    fn build(net_len: usize, spec: &ReachSpec) -> Result<(Self, usize)> {
        match &spec.mode {
            SampleMode::Exhaustive => {
                let mut total: u128 = 1;
                for _ in 0..spec.switch_count {
                    total = total.saturating_mul(net_len as u128);
                    if total > spec.budget as u128 {
                        return Err(Error::BudgetExceeded {
                            required: total,
                            budget: spec.budget,
                        });
                    }
                }
                Ok((
                    SequencePlan::Exhaustive {
                        net_len,
                        pieces: spec.switch_count,
                    },
                    total as usize,
                ))
            }
            SampleMode::Random { seed, samples } => {
                if *samples as u64 > spec.budget {
                    return Err(Error::BudgetExceeded {
                        required: *samples as u128,
                        budget: spec.budget,
                    });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let pieces = spec.switch_count;
                // Half the draws hold each value across pieces and switch only
                // with probability ~2/N. Independent per-piece draws alone
                // almost never produce few-switch extremal controls once N is
                // large, and those controls carry the boundary of the
                // reachable set; the sticky half keeps any fixed switching
                // pattern at probability bounded away from zero as the grid
                // refines, so refinement coverage does not degrade.
                let switch_prob = (2.0 / pieces as f64).min(1.0);
                let draws = (0..*samples)
                    .map(|_| {
                        let sticky = rng.gen_bool(0.5);
                        let mut value = rng.gen_range(0..net_len);
                        (0..pieces)
                            .map(|i| {
                                if !sticky || (i > 0 && rng.gen_bool(switch_prob)) {
                                    value = rng.gen_range(0..net_len);
                                }
                                value
                            })
                            .collect()
                    })
                    .collect();
                Ok((SequencePlan::Random { draws }, *samples))
            }
        }
    }

    fn indices(&self, seq: usize) -> Vec<usize> {
        match self {
            SequencePlan::Exhaustive { net_len, pieces } => {
                let mut digits = Vec::with_capacity(*pieces);
                let mut rest = seq;
                for _ in 0..*pieces {
                    digits.push(rest % net_len);
                    rest /= net_len;
                }
                digits
            }
            SequencePlan::Random { draws } => draws[seq].clone(),
        }
    }
}

/// Occupied dedup cells of the reachable cloud, one set per cut time.
fn collect_cells(
    system: &ControlAffineSystem,
    x0: &[f64],
    cuts: &[f64],
    omega: &OmegaSet,
    spec: &ReachSpec,
) -> Result<Vec<BTreeSet<Vec<i64>>>> {
    let horizon = cuts.iter().cloned().fold(0.0f64, f64::max);
    let cut_tol = 1e-9 * horizon.max(1.0);
    let net = omega.net(spec.value_resolution, true)?;
    let (plan, total) = SequencePlan::build(net.len(), spec)?;

    let run_one = |seq: usize| -> Result<Vec<BTreeSet<Vec<i64>>>> {
        let indices = plan.indices(seq);
        let values: Vec<Vec<f64>> = indices.iter().map(|&i| net[i].clone()).collect();
        let control = PiecewiseConstantControl::uniform_unchecked(horizon, values)?;
        let traj = integrate_trajectory(system, x0, &control, horizon, spec.step).map_err(
            |e| match e {
                Error::BlowUp { time } => Error::ReachBlowUp {
                    time,
                    sequence: indices.clone(),
                },
                other => other,
            },
        )?;
        let mut sets = vec![BTreeSet::new(); cuts.len()];
        for (time, state) in traj.times().iter().zip(traj.states()) {
            let key = cell_key(state, spec.dedup_resolution)?;
            for (ci, &cut) in cuts.iter().enumerate() {
                if *time <= cut + cut_tol {
                    sets[ci].insert(key.clone());
                }
            }
        }
        Ok(sets)
    };

    let merge = |mut a: Vec<BTreeSet<Vec<i64>>>, b: Vec<BTreeSet<Vec<i64>>>| {
        for (ai, bi) in a.iter_mut().zip(b) {
            ai.extend(bi);
        }
        a
    };

    #[cfg(feature = "parallel")]
    {
        (0..total)
            .into_par_iter()
            .map(run_one)
            .try_reduce(|| vec![BTreeSet::new(); cuts.len()], |a, b| Ok(merge(a, b)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut acc = vec![BTreeSet::new(); cuts.len()];
        for seq in 0..total {
            acc = merge(acc, run_one(seq)?);
        }
        Ok(acc)
    }
}

/// Reachable clouds at several cut times from one family of controls
/// switching on the uniform grid of the largest cut. The clouds share every
/// integration grid, so for `s ≤ t` the cloud at `s` is exactly a subset of
/// the cloud at `t`.
pub fn reachable_clouds_at(
    system: &ControlAffineSystem,
    x0: &[f64],
    cuts: &[f64],
    omega: &OmegaSet,
    spec: &ReachSpec,
) -> Result<Vec<PointCloud>> {
    spec.validate()?;
    if cuts.is_empty() {
        return Err(Error::InvalidArgument("need at least one cut time".into()));
    }
    if cuts.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument("cut times must be positive".into()));
    }
    if omega.dim() != system.control_dim() {
        return Err(Error::DimensionMismatch {
            context: "control range",
            expected: system.control_dim(),
            got: omega.dim(),
        });
    }
    let cells = collect_cells(system, x0, cuts, omega, spec)?;
    cells
        .iter()
        .map(|set| PointCloud::from_cells(system.state_dim(), set, spec.dedup_resolution))
        .collect()
}

/// Reachable cloud up to time `t` (always contains the start cell: the
/// trajectory at time 0 is recorded).
pub fn reachable_cloud(
    system: &ControlAffineSystem,
    x0: &[f64],
    t: f64,
    omega: &OmegaSet,
    spec: &ReachSpec,
) -> Result<PointCloud> {
    Ok(reachable_clouds_at(system, x0, &[t], omega, spec)?.pop().unwrap())
}

/// Successive refinement gaps `ρ_H(cloud_j, cloud_{j+1})`, `levels` of them.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    /// `(level, gap)` rows, level `j` comparing clouds `j` and `j+1`.
    pub gaps: Vec<(usize, f64)>,
    /// Strictly-decreasing trend over the gaps; absent for a single gap.
    pub monotone: Option<bool>,
    /// Spec of the finest level computed.
    pub final_spec: ReachSpec,
}

pub fn convergence_study(
    system: &ControlAffineSystem,
    x0: &[f64],
    t: f64,
    omega: &OmegaSet,
    spec: &ReachSpec,
    levels: usize,
) -> Result<ConvergenceStudy> {
    if levels == 0 {
        return Err(Error::InvalidArgument("need at least one level".into()));
    }
    let mut specs = vec![spec.clone()];
    for _ in 0..levels {
        specs.push(specs.last().unwrap().refine());
    }
    let mut prev = reachable_cloud(system, x0, t, omega, &specs[0])?;
    let mut gaps = Vec::with_capacity(levels);
    for (level, fine_spec) in specs[1..].iter().enumerate() {
        let next = reachable_cloud(system, x0, t, omega, fine_spec)?;
        gaps.push((level, hausdorff(&prev, &next)?));
        prev = next;
    }
    let monotone = if gaps.len() >= 2 {
        Some(gaps.windows(2).all(|w| w[1].1 < w[0].1))
    } else {
        None
    };
    Ok(ConvergenceStudy {
        gaps,
        monotone,
        final_spec: specs.pop().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::directed_hausdorff;

    fn single_integrator() -> ControlAffineSystem {
        ControlAffineSystem::from_strings(1, 1, &["0"], &[vec!["1"]]).unwrap()
    }

    fn box1(l: f64, u: f64) -> OmegaSet {
        OmegaSet::box_set(vec![l], vec![u]).unwrap()
    }

    fn grid_cloud(lo: f64, hi: f64, step: f64) -> PointCloud {
        let count = ((hi - lo) / step).round() as usize;
        PointCloud::new(
            1,
            (0..=count).map(|i| vec![lo + step * i as f64]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_integrator_interval() {
        let sys = single_integrator();
        let spec = ReachSpec::new(2, 4, 0.01, 0.005);
        let cloud = reachable_cloud(&sys, &[0.0], 1.0, &box1(-1.0, 1.0), &spec).unwrap();
        let reference = grid_cloud(-1.0, 1.0, 0.005);
        assert!(hausdorff(&cloud, &reference).unwrap() <= 0.02);
    }

    #[test]
    fn singleton_range_gives_drift_trajectory() {
        let sys = ControlAffineSystem::from_strings(1, 1, &["x0"], &[vec!["0"]]).unwrap();
        let omega = box1(0.0, 0.0);
        let spec = ReachSpec::new(2, 3, 0.01, 1e-6);
        let cloud = reachable_cloud(&sys, &[1.0], 0.5, &omega, &spec).unwrap();
        // one control only: the drift trajectory, quantized
        let traj = integrate_trajectory(
            &sys,
            &[1.0],
            &PiecewiseConstantControl::uniform_unchecked(0.5, vec![vec![0.0], vec![0.0]]).unwrap(),
            0.5,
            0.01,
        )
        .unwrap();
        let raw = PointCloud::new(1, traj.states().to_vec()).unwrap();
        assert!(hausdorff(&cloud, &raw).unwrap() <= 1e-6);
    }

    #[test]
    fn short_horizon_stays_near_start() {
        let sys = single_integrator();
        let spec = ReachSpec::new(1, 2, 1e-4, 1e-5);
        let t = 1e-3;
        let cloud = reachable_cloud(&sys, &[0.5], t, &box1(-1.0, 1.0), &spec).unwrap();
        let start = PointCloud::singleton(vec![0.5]).unwrap();
        // sup |rhs| = 1 on this system
        assert!(hausdorff(&cloud, &start).unwrap() <= t + 1e-5);
    }

    #[test]
    fn refine_rule() {
        let spec = ReachSpec::new(1, 1, 0.04, 0.02);
        let fine = spec.refine();
        assert_eq!(fine.switch_count, 2);
        assert_eq!(fine.value_resolution, 2);
        assert_eq!(fine.step, 0.02);
        assert_eq!(fine.dedup_resolution, 0.01);
    }

    #[test]
    fn time_cuts_nest_exactly() {
        let sys = ControlAffineSystem::from_strings(2, 1, &["x1", "0"], &[vec!["0", "1"]]).unwrap();
        let spec = ReachSpec::new(2, 2, 0.01, 0.01);
        let clouds = reachable_clouds_at(
            &sys,
            &[0.0, 0.0],
            &[0.6, 0.8, 1.0],
            &box1(-1.0, 1.0),
            &spec,
        )
        .unwrap();
        assert_eq!(directed_hausdorff(&clouds[0], &clouds[1]).unwrap(), 0.0);
        assert_eq!(directed_hausdorff(&clouds[1], &clouds[2]).unwrap(), 0.0);
        assert!(clouds[0].len() < clouds[2].len());
    }

    #[test]
    fn nested_ranges_nest_clouds() {
        let sys = single_integrator();
        // net({-1..1}, 2) = {-1, 0, 1} is a subset of net({-2..2}, 4)
        let inner = reachable_cloud(
            &sys,
            &[0.0],
            1.0,
            &box1(-1.0, 1.0),
            &ReachSpec::new(2, 2, 0.01, 0.005),
        )
        .unwrap();
        let outer = reachable_cloud(
            &sys,
            &[0.0],
            1.0,
            &box1(-2.0, 2.0),
            &ReachSpec::new(2, 4, 0.01, 0.005),
        )
        .unwrap();
        assert!(directed_hausdorff(&inner, &outer).unwrap() <= 0.005);
    }

    #[test]
    fn deterministic_across_runs() {
        let sys = ControlAffineSystem::from_strings(
            2,
            1,
            &["x1", "(1 - x0^2)*x1 - x0"],
            &[vec!["0", "1"]],
        )
        .unwrap();
        let spec = ReachSpec::new(2, 2, 0.02, 0.01).with_mode(SampleMode::Random {
            seed: 42,
            samples: 64,
        });
        let omega = box1(-1.0, 1.0);
        let a = reachable_cloud(&sys, &[2.0, 0.0], 1.0, &omega, &spec).unwrap();
        let b = reachable_cloud(&sys, &[2.0, 0.0], 1.0, &omega, &spec).unwrap();
        assert_eq!(a, b);
        for (p, q) in a.points().iter().zip(b.points()) {
            for (x, y) in p.iter().zip(q) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn linear_cloud_scales_with_range() {
        let sys = ControlAffineSystem::from_strings(
            2,
            2,
            &["x1", "-x0 - 0.5*x1"],
            &[vec!["1", "0"], vec!["0", "1"]],
        )
        .unwrap();
        let spec = ReachSpec::new(2, 2, 0.02, 0.01);
        let spec2 = ReachSpec::new(2, 2, 0.02, 0.02);
        let omega = OmegaSet::box_set(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let omega2 = OmegaSet::box_set(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let base = reachable_cloud(&sys, &[0.0, 0.0], 1.0, &omega, &spec).unwrap();
        let scaled = reachable_cloud(&sys, &[0.0, 0.0], 1.0, &omega2, &spec2).unwrap();
        let doubled = PointCloud::new(
            2,
            base.points()
                .iter()
                .map(|p| p.iter().map(|x| 2.0 * x).collect())
                .collect(),
        )
        .unwrap();
        assert!(hausdorff(&scaled, &doubled).unwrap() <= 1e-10);
    }

    #[test]
    fn budget_guard() {
        let sys = single_integrator();
        let mut spec = ReachSpec::new(30, 4, 0.1, 0.01);
        spec.budget = 1000;
        let err = reachable_cloud(&sys, &[0.0], 1.0, &box1(-1.0, 1.0), &spec).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn blow_up_names_sequence() {
        let sys = ControlAffineSystem::from_strings(1, 1, &["x0^2"], &[vec!["0"]]).unwrap();
        let spec = ReachSpec::new(1, 1, 0.001, 0.01);
        let err = reachable_cloud(&sys, &[1.0], 2.0, &box1(0.0, 0.0), &spec).unwrap_err();
        assert!(matches!(err, Error::ReachBlowUp { .. }));
    }

    #[test]
    fn convergence_on_single_integrator() {
        let sys = single_integrator();
        let spec = ReachSpec::new(1, 1, 0.08, 0.08);
        let study =
            convergence_study(&sys, &[0.0], 1.0, &box1(-1.0, 1.0), &spec, 3).unwrap();
        assert_eq!(study.gaps.len(), 3);
        assert_eq!(study.final_spec.switch_count, 8);
        // the cloud approaches the analytic interval as levels refine
        let reference = grid_cloud(-1.0, 1.0, 0.005);
        let mut last = f64::INFINITY;
        let mut s = spec.clone();
        for _ in 0..4 {
            let cloud = reachable_cloud(&sys, &[0.0], 1.0, &box1(-1.0, 1.0), &s).unwrap();
            let d = hausdorff(&cloud, &reference).unwrap();
            assert!(d <= last + 1e-12);
            last = d;
            s = s.refine();
        }
    }

    #[test]
    fn singleton_range_gaps_stay_at_refinement_scale() {
        // one admissible control only: successive clouds differ just by the
        // dedup grid and the time sampling along the drift trajectory, both
        // of which halve per level (max speed here is e)
        let sys = ControlAffineSystem::from_strings(1, 1, &["x0"], &[vec!["0"]]).unwrap();
        let spec = ReachSpec::new(1, 1, 0.01, 0.04);
        let study =
            convergence_study(&sys, &[1.0], 1.0, &box1(0.0, 0.0), &spec, 3).unwrap();
        let mut allowance = spec.dedup_resolution + std::f64::consts::E * spec.step;
        for &(_, gap) in &study.gaps {
            assert!(gap <= allowance, "gap {gap} above refinement scale {allowance}");
            allowance /= 2.0;
        }
    }

    #[test]
    fn single_gap_has_no_trend_flag() {
        let sys = single_integrator();
        let spec = ReachSpec::new(1, 1, 0.1, 0.05);
        let study =
            convergence_study(&sys, &[0.0], 0.5, &box1(-1.0, 1.0), &spec, 1).unwrap();
        assert_eq!(study.gaps.len(), 1);
        assert!(study.monotone.is_none());
    }
}
