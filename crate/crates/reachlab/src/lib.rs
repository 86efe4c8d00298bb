//! Numerical construction of reachable sets of restricted control-affine
//! systems, with Hausdorff-metric continuity experiments.
//!
//! The toolkit builds point-cloud approximations of the set of states a
//! control-affine system `ẋ = f0(x) + Σ u_i(t) f_i(x)`, `u(t) ∈ Ω`, can
//! reach from a start state within a time horizon, using piecewise-constant
//! controls sampled from a finite net of the compact convex control range
//! `Ω`. On top of the clouds it measures, in the Hausdorff metric, how the
//! reachable set moves as the horizon, the start state and the control range
//! are perturbed, checks refinement convergence of the sampling scheme, and
//! extremizes scalar functionals over the computed clouds.
//!
//! Modules, bottom up:
//!
//! - [`expr`]: scalar expression parsing and evaluation for field components
//!   and functionals.
//! - [`system`]: control-affine systems and piecewise-constant controls.
//! - [`omega`]: geometry of the control range (membership, projection,
//!   support functions, nets, Hausdorff distance, inflation, transport of
//!   controls between nearby ranges).
//! - [`integrate`]: fixed-step RK4 trajectories with dense output and
//!   blow-up detection.
//! - [`metric`]: Hausdorff machinery on point clouds and the weak* pairing
//!   discrepancy between controls.
//! - [`reach`]: reachable-cloud construction, refinement and convergence
//!   studies.
//! - [`lab`]: continuity sweeps (range / horizon / state / joint), slack
//!   accounting and functional extremization.
//! - [`config`] and [`cli`]: the config-driven command-line runner.
//!
//! Heavy inner loops (cloud construction, directed Hausdorff) are
//! data-parallel via rayon when the default `parallel` feature is enabled
//! and fall back to sequential loops without it; results are bit-identical
//! either way.

// `!(x > 0.0)`-style guards are deliberate: they reject NaN along with the
// out-of-range values, which plain `x <= 0.0` comparisons would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod integrate;
pub mod lab;
pub mod metric;
pub mod omega;
pub mod reach;
pub mod system;
mod vecn;

pub use error::{Error, Result};
pub use expr::{parse_expression, Expr};
pub use integrate::{flow_endpoint, integrate_trajectory, Trajectory};
pub use metric::{
    directed_hausdorff, hausdorff, quantize_cloud, weak_star_discrepancy, within_neighborhood,
    PointCloud, TestFunctionDictionary,
};
pub use omega::{omega_hausdorff, transport_control, OmegaSet};
pub use reach::{convergence_study, reachable_cloud, reachable_clouds_at, ReachSpec, SampleMode};
pub use system::{ControlAffineSystem, PiecewiseConstantControl};
