//! Control-affine systems and piecewise-constant controls.
//!
//! A system is `ẋ = f0(x) + Σ_i u_i(t) f_i(x)` with the control value
//! constrained to a compact convex range. Controls are represented as
//! right-continuous step functions with an explicit extension value outside
//! their breakpoint window; which one-sided convention is used does not
//! change trajectories (the values differ on a null set), but it makes
//! [`PiecewiseConstantControl::value_at`] total and deterministic.

use crate::error::{Error, Result};
use crate::expr::{parse_expression, state_vars, Expr};
use crate::omega::OmegaSet;
use crate::vecn;

/// Tolerance for checking control values against the declared range.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// The family `ẋ = f0(x) + Σ u_i f_i(x)` on ℝⁿ with m control channels.
#[derive(Debug, Clone)]
pub struct ControlAffineSystem {
    state_dim: usize,
    control_dim: usize,
    drift: Vec<Expr>,
    controlled: Vec<Vec<Expr>>,
}

impl ControlAffineSystem {
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        drift: Vec<Expr>,
        controlled: Vec<Vec<Expr>>,
    ) -> Result<Self> {
        if state_dim == 0 || control_dim == 0 {
            return Err(Error::InvalidArgument(
                "state and control dimensions must be positive".into(),
            ));
        }
        if drift.len() != state_dim {
            return Err(Error::DimensionMismatch {
                context: "drift field",
                expected: state_dim,
                got: drift.len(),
            });
        }
        if controlled.len() != control_dim {
            return Err(Error::DimensionMismatch {
                context: "controlled field count",
                expected: control_dim,
                got: controlled.len(),
            });
        }
        for field in &controlled {
            if field.len() != state_dim {
                return Err(Error::DimensionMismatch {
                    context: "controlled field",
                    expected: state_dim,
                    got: field.len(),
                });
            }
        }
        Ok(Self {
            state_dim,
            control_dim,
            drift,
            controlled,
        })
    }

    /// Parse a system from expression strings in the variables `x0…x{n-1}`.
    pub fn from_strings<S: AsRef<str>>(
        state_dim: usize,
        control_dim: usize,
        drift: &[S],
        controlled: &[Vec<S>],
    ) -> Result<Self> {
        let vars = state_vars(state_dim);
        let parse_all = |exprs: &[S]| -> Result<Vec<Expr>> {
            exprs
                .iter()
                .map(|s| parse_expression(s.as_ref(), &vars))
                .collect()
        };
        let drift = parse_all(drift)?;
        let controlled = controlled
            .iter()
            .map(|f| parse_all(f))
            .collect::<Result<Vec<_>>>()?;
        Self::new(state_dim, control_dim, drift, controlled)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn controlled_fields(&self) -> &[Vec<Expr>] {
        &self.controlled
    }

    /// Evaluate `f0(x) + Σ u_i f_i(x)` into `out`.
    pub fn rhs_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "state vector",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        if u.len() != self.control_dim {
            return Err(Error::DimensionMismatch {
                context: "control vector",
                expected: self.control_dim,
                got: u.len(),
            });
        }
        debug_assert_eq!(out.len(), self.state_dim);
        for (o, component) in out.iter_mut().zip(&self.drift) {
            *o = component.eval(x)?;
        }
        for (field, &uj) in self.controlled.iter().zip(u) {
            for (o, component) in out.iter_mut().zip(field) {
                *o += uj * component.eval(x)?;
            }
        }
        if !vecn::all_finite(out) {
            return Err(Error::Domain("right-hand side is not finite".into()));
        }
        Ok(())
    }

    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim];
        self.rhs_into(x, u, &mut out)?;
        Ok(out)
    }
}

/// Right-continuous step function `u : ℝ → ℝᵐ`. Piece `k` holds its value on
/// `[t_k, t_{k+1})`; outside `[0, t_N)` the extension value applies.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantControl {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
    extension: Vec<f64>,
}

impl PiecewiseConstantControl {
    /// Construct after checking shape and membership of every value (and the
    /// extension value) in the declared range.
    pub fn new(
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
        extension: Vec<f64>,
        omega: &OmegaSet,
    ) -> Result<Self> {
        let c = Self::from_parts(breakpoints, values, extension)?;
        c.check_membership(omega)?;
        Ok(c)
    }

    /// Shape-only constructor for values already known to lie in the range
    /// (e.g. taken from a control net).
    pub(crate) fn from_parts(
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
        extension: Vec<f64>,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidControl(
                "need at least one piece (two breakpoints)".into(),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidControl(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidControl(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if values.len() != breakpoints.len() - 1 {
            return Err(Error::InvalidControl(format!(
                "{} breakpoints require {} values, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                values.len()
            )));
        }
        let m = extension.len();
        if m == 0 || values.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidControl(
                "all values and the extension must share one positive dimension".into(),
            ));
        }
        if !breakpoints.iter().all(|b| b.is_finite())
            || !values.iter().all(|v| vecn::all_finite(v))
            || !vecn::all_finite(&extension)
        {
            return Err(Error::InvalidControl("non-finite entries".into()));
        }
        Ok(Self {
            breakpoints,
            values,
            extension,
        })
    }

    fn check_membership(&self, omega: &OmegaSet) -> Result<()> {
        if omega.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "control range",
                expected: self.dim(),
                got: omega.dim(),
            });
        }
        for (k, v) in self.values.iter().chain(std::iter::once(&self.extension)).enumerate() {
            if !omega.contains(v, MEMBERSHIP_TOL)? {
                return Err(Error::ControlOutsideOmega {
                    piece: k,
                    distance: omega.distance_to(v)?,
                });
            }
        }
        Ok(())
    }

    /// `N` equal pieces on `[0, horizon]`; the extension repeats the last value.
    pub fn uniform(horizon: f64, values: Vec<Vec<f64>>, omega: &OmegaSet) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidControl("horizon must be positive".into()));
        }
        let n = values.len();
        if n == 0 {
            return Err(Error::InvalidControl("need at least one value".into()));
        }
        let mut breakpoints: Vec<f64> = (0..n)
            .map(|j| (j as f64) * horizon / (n as f64))
            .collect();
        breakpoints.push(horizon);
        let extension = values[n - 1].clone();
        Self::new(breakpoints, values, extension, omega)
    }

    pub fn constant(value: Vec<f64>, horizon: f64, omega: &OmegaSet) -> Result<Self> {
        Self::uniform(horizon, vec![value], omega)
    }

    pub(crate) fn uniform_unchecked(horizon: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        let mut breakpoints: Vec<f64> = (0..n)
            .map(|j| (j as f64) * horizon / (n as f64))
            .collect();
        breakpoints.push(horizon);
        let extension = values[n - 1].clone();
        Self::from_parts(breakpoints, values, extension)
    }

    pub fn dim(&self) -> usize {
        self.extension.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn extension(&self) -> &[f64] {
        &self.extension
    }

    pub fn window_end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Value of the active piece; right-continuous at breakpoints, extension
    /// value outside `[0, t_N)`.
    pub fn value_at(&self, s: f64) -> &[f64] {
        let idx = self.breakpoints.partition_point(|&b| b <= s);
        if idx == 0 || idx > self.values.len() {
            &self.extension
        } else {
            &self.values[idx - 1]
        }
    }

    /// The control `s ↦ u(s + shift)` restricted to `[0, ∞)`, as a step
    /// function. Used to express trajectory concatenation.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        if !(shift >= 0.0) {
            return Err(Error::InvalidControl("shift must be non-negative".into()));
        }
        let mut breakpoints = vec![0.0];
        let mut values = Vec::new();
        for k in 0..self.values.len() {
            let end = self.breakpoints[k + 1] - shift;
            if end > 1e-15 {
                values.push(self.values[k].clone());
                breakpoints.push(end);
            }
        }
        if values.is_empty() {
            breakpoints = vec![0.0, 1.0];
            values = vec![self.extension.clone()];
        }
        Self::from_parts(breakpoints, values, self.extension.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_integrator() -> ControlAffineSystem {
        ControlAffineSystem::from_strings(1, 1, &["0"], &[vec!["1"]]).unwrap()
    }

    fn double_integrator() -> ControlAffineSystem {
        ControlAffineSystem::from_strings(2, 1, &["x1", "0"], &[vec!["0", "1"]]).unwrap()
    }

    #[test]
    fn rhs_single_integrator() {
        let sys = single_integrator();
        assert_eq!(sys.rhs(&[5.0], &[0.3]).unwrap(), vec![0.3]);
    }

    #[test]
    fn zero_control_gives_drift() {
        let sys = double_integrator();
        assert_eq!(sys.rhs(&[1.0, 2.0], &[0.0]).unwrap(), vec![2.0, 0.0]);
    }

    #[test]
    fn rhs_double_integrator() {
        let sys = double_integrator();
        assert_eq!(sys.rhs(&[1.0, 2.0], &[-1.0]).unwrap(), vec![2.0, -1.0]);
    }

    #[test]
    fn rhs_dimension_checks() {
        let sys = double_integrator();
        assert!(sys.rhs(&[1.0], &[0.0]).is_err());
        assert!(sys.rhs(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn field_count_mismatch_rejected() {
        let err = ControlAffineSystem::from_strings(1, 2, &["0"], &[vec!["1"]]).unwrap_err();
        assert!(err.to_string().contains("controlled field count"));
    }

    fn omega_1d() -> OmegaSet {
        OmegaSet::box_set(vec![-5.0], vec![5.0]).unwrap()
    }

    #[test]
    fn control_value_pieces() {
        let omega = omega_1d();
        let u = PiecewiseConstantControl::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![1.0], vec![2.0]],
            vec![-3.0],
            &omega,
        )
        .unwrap();
        assert_eq!(u.value_at(0.5), &[1.0]);
        // right-continuity at the interior breakpoint
        assert_eq!(u.value_at(1.0), &[2.0]);
        assert_eq!(u.value_at(-3.0), &[-3.0]);
        assert_eq!(u.value_at(2.0), &[-3.0]);
        assert_eq!(u.value_at(7.0), &[-3.0]);
    }

    #[test]
    fn control_validation() {
        let omega = omega_1d();
        // breakpoints must start at 0 and increase
        assert!(PiecewiseConstantControl::new(
            vec![0.5, 1.0],
            vec![vec![1.0]],
            vec![0.0],
            &omega
        )
        .is_err());
        assert!(PiecewiseConstantControl::new(
            vec![0.0, 1.0, 1.0],
            vec![vec![1.0], vec![2.0]],
            vec![0.0],
            &omega
        )
        .is_err());
        // value outside the range
        let err = PiecewiseConstantControl::new(
            vec![0.0, 1.0],
            vec![vec![9.0]],
            vec![0.0],
            &omega,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ControlOutsideOmega { piece: 0, .. }));
    }

    #[test]
    fn shifted_control() {
        let omega = omega_1d();
        let u = PiecewiseConstantControl::new(
            vec![0.0, 1.0, 2.0],
            vec![vec![1.0], vec![2.0]],
            vec![-3.0],
            &omega,
        )
        .unwrap();
        let v = u.shifted(0.5).unwrap();
        assert_eq!(v.value_at(0.0), &[1.0]);
        assert_eq!(v.value_at(0.6), &[2.0]);
        assert_eq!(v.value_at(1.5), &[-3.0]);
        // shifting past the window leaves only the extension
        let w = u.shifted(5.0).unwrap();
        assert_eq!(w.value_at(0.3), &[-3.0]);
    }

    proptest! {
        /// rhs is affine in u: rhs(x, αu + (1-α)v) = α·rhs(x,u) + (1-α)·rhs(x,v).
        #[test]
        fn rhs_affine_in_control(
            x0 in -3.0f64..3.0,
            x1 in -3.0f64..3.0,
            u in -2.0f64..2.0,
            v in -2.0f64..2.0,
            alpha in 0.0f64..1.0,
        ) {
            let sys = ControlAffineSystem::from_strings(
                2, 1,
                &["x1", "sin(x0)"],
                &[vec!["0", "1 + x0^2"]],
            ).unwrap();
            let x = [x0, x1];
            let mixed = sys.rhs(&x, &[alpha * u + (1.0 - alpha) * v]).unwrap();
            let a = sys.rhs(&x, &[u]).unwrap();
            let b = sys.rhs(&x, &[v]).unwrap();
            for i in 0..2 {
                let expect = alpha * a[i] + (1.0 - alpha) * b[i];
                prop_assert!((mixed[i] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
    }
}
