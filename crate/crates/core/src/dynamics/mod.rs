//! Benchmark systems, closed-loop simulation and LQR.

mod integrate;
mod linalg;
mod lqr;
mod policy;
mod systems;

pub use integrate::{rk4_step, simulate, SimConfig, Termination, Trajectory};
pub use linalg::{is_hurwitz, lyapunov_solve, Mat};
pub use lqr::{care_residual, linearize, lqr_gain, stabilizing_gain, LinearModel};
pub use policy::{LinearPolicy, NetPolicy, Policy, ZeroPolicy};
pub use systems::{
    g_smooth, g_smooth_deriv, record_g_smooth, BoundedInput, GainSwitch, LinearSystem, SystemId,
    BOUNDED_INPUT_LIMIT, GAIN_SWITCH_K,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{DiffError, Tape, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("{0}")]
    Dimension(String),
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("initial state {0:?} is outside the domain")]
    OutsideDomain(Vec<f64>),
    #[error("numeric fault: {0}")]
    NumericFault(String),
    #[error("no stabilising initial gain found")]
    NotStabilizable,
    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Open axis-aligned box `∏ (lo_i, hi_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, DynamicsError> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(DynamicsError::Dimension("box bounds must satisfy lo < hi".into()));
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn symmetric(dim: usize, half: f64) -> Self {
        BoxDomain { lo: vec![-half; dim], hi: vec![half; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a < *v && *v < *b)
    }

    pub fn min_half_width(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min)
    }
}

/// Row-major batch of states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBatch {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl StateBatch {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "batch data does not match dimension");
        StateBatch { dim, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(1, Vec::len);
        StateBatch::new(dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// `ẋ = f(x, u)` on a domain box.
pub trait DynSystem: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn domain(&self) -> &BoxDomain;

    /// Bounds that the effective input respects, if any.
    fn input_box(&self) -> Option<&BoxDomain> {
        None
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64>;

    /// Batched right-hand side, `B × m, B × n → B × m`.
    fn record_rhs(&self, tape: &mut Tape, x: Var, u: Var) -> Result<Var, DiffError>;
}

impl<T: DynSystem + ?Sized> DynSystem for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn domain(&self) -> &BoxDomain {
        (**self).domain()
    }
    fn input_box(&self) -> Option<&BoxDomain> {
        (**self).input_box()
    }
    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (**self).rhs(x, u)
    }
    fn record_rhs(&self, tape: &mut Tape, x: Var, u: Var) -> Result<Var, DiffError> {
        (**self).record_rhs(tape, x, u)
    }
}
