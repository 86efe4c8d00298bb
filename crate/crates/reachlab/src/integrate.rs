//! Fixed-step RK4 trajectories with dense output.
//!
//! Steps are split exactly at control breakpoints, so every RK4 step sees a
//! constant control value and the computed curve is a concatenation of smooth
//! pieces. The state is recorded at every grid time; the final time equals
//! the requested horizon exactly (the last partial step is shortened). Fixed
//! stepping keeps integration grids deterministic, which makes cloud
//! comparisons reproducible and time-nesting exact.
//!
//! Solutions are assumed to exist on the whole horizon; the integrator checks
//! rather than assumes: any non-finite state or state norm above 1e12 aborts
//! with the first offending time.

use crate::error::{Error, Result, BLOWUP_NORM};
use crate::system::{ControlAffineSystem, PiecewiseConstantControl};
use crate::vecn;

/// Dense-output record of one integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    control: PiecewiseConstantControl,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn control(&self) -> &PiecewiseConstantControl {
        &self.control
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false // times always contains t = 0
    }
}

/// Integration grid: multiples of `step`, control breakpoints inside the
/// window, and the horizon itself.
fn build_grid(horizon: f64, step: f64, breakpoints: &[f64]) -> Vec<f64> {
    let tol = 1e-12 * horizon.max(1.0);
    let mut ts = vec![0.0];
    let mut i = 1usize;
    loop {
        let t = (i as f64) * step;
        if t >= horizon * (1.0 - 1e-12) {
            break;
        }
        ts.push(t);
        i += 1;
    }
    for &b in breakpoints {
        if b > tol && b < horizon - tol {
            ts.push(b);
        }
    }
    ts.push(horizon);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut grid = Vec::with_capacity(ts.len());
    grid.push(0.0);
    for &t in &ts[1..] {
        if t - grid.last().unwrap() > tol {
            grid.push(t);
        }
    }
    *grid.last_mut().unwrap() = horizon;
    grid
}

fn check_state(x: &[f64], time: f64) -> Result<()> {
    if !vecn::all_finite(x) || vecn::norm(x) > BLOWUP_NORM {
        return Err(Error::BlowUp { time });
    }
    Ok(())
}

/// Integrate `ẋ = f0(x) + Σ u_i(t) f_i(x)` over `[0, horizon]`.
pub fn integrate_trajectory(
    system: &ControlAffineSystem,
    x0: &[f64],
    u: &PiecewiseConstantControl,
    horizon: f64,
    step: f64,
) -> Result<Trajectory> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    if x0.len() != system.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: system.state_dim(),
            got: x0.len(),
        });
    }
    if u.dim() != system.control_dim() {
        return Err(Error::DimensionMismatch {
            context: "control",
            expected: system.control_dim(),
            got: u.dim(),
        });
    }
    if !vecn::all_finite(x0) {
        return Err(Error::InvalidArgument("initial state must be finite".into()));
    }
    check_state(x0, 0.0)?;

    let grid = build_grid(horizon, step, u.breakpoints());
    let n = system.state_dim();
    let mut states = Vec::with_capacity(grid.len());
    states.push(x0.to_vec());

    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let h = t1 - t0;
        // constant over [t0, t1) because the grid splits at breakpoints
        let c = u.value_at(t0);

        system.rhs_into(&x, c, &mut k1)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        system.rhs_into(&tmp, c, &mut k2)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        system.rhs_into(&tmp, c, &mut k3)?;
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        system.rhs_into(&tmp, c, &mut k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_state(&x, t1)?;
        states.push(x.clone());
    }

    Ok(Trajectory {
        times: grid,
        states,
        control: u.clone(),
    })
}

/// The flow endpoint `φ(s, x0, u)`, by integrating to exactly `s`.
pub fn flow_endpoint(
    system: &ControlAffineSystem,
    x0: &[f64],
    u: &PiecewiseConstantControl,
    s: f64,
    step: f64,
) -> Result<Vec<f64>> {
    if s == 0.0 {
        if x0.len() != system.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "initial state",
                expected: system.state_dim(),
                got: x0.len(),
            });
        }
        check_state(x0, 0.0)?;
        return Ok(x0.to_vec());
    }
    if !(s > 0.0) {
        return Err(Error::InvalidArgument("time must be >= 0".into()));
    }
    let traj = integrate_trajectory(system, x0, u, s, step)?;
    Ok(traj.final_state().to_vec())
}
