//! Crate-wide error type.

use std::io;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// State-norm bound above which a trajectory counts as blown up.
pub const BLOWUP_NORM: f64 = 1e12;

#[derive(Debug, Error)]
pub enum Error {
    /// Expression text did not parse. Positions are 1-based character offsets;
    /// end of input is reported at `len + 1`.
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },

    #[error("unknown function `{name}` at position {position}")]
    UnknownFunction { name: String, position: usize },

    #[error("unbound variable `{name}`")]
    UnboundVariable { name: String },

    /// Evaluation left the real domain: division by zero, square root of a
    /// negative, a negative base under a non-integer exponent, or a
    /// non-finite intermediate value.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{context}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("direction vector must have unit norm, got |d| = {norm}")]
    InvalidDirection { norm: f64 },

    #[error("hull projection did not converge within {iterations} iterations")]
    ProjectionDiverged { iterations: usize },

    #[error("inflation is not supported for hull sets; use a box or ball range")]
    UnsupportedInflation,

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("control value {piece} lies outside the declared control range (distance {distance:.3e})")]
    ControlOutsideOmega { piece: usize, distance: f64 },

    #[error("trajectory blow-up at t = {time}: state non-finite or norm above 1e12")]
    BlowUp { time: f64 },

    #[error("trajectory blow-up at t = {time} under control sequence {sequence:?}")]
    ReachBlowUp { time: f64, sequence: Vec<usize> },

    #[error("sampling budget exceeded: {required} control sequences, budget {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("point cloud must be non-empty")]
    EmptyCloud,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// CLI exit classification: configuration/input problems exit with 2,
    /// runtime failures (blow-up, budget, numerics) with 3.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
