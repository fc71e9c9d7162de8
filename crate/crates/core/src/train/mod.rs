//! Optimisers, losses and the two training loops.

mod adam;
mod config;
mod fit;
mod loss;
mod sampler;
mod synth;

pub use adam::{Adam, AdamConfig};
pub use config::{ConfigIssue, ExperimentConfig, Mode, NetConfig, SamplerConfig, WarmStartConfig};
pub use fit::{fit_function, holdout_mse, mse_and_grad, FitOutcome, FIT_CHUNK};
pub use loss::{lie_values, mse, mse_loss, risk_canonical, risk_reduced, vdot, LieValues};
pub use sampler::sample_uniform_box;
pub use synth::{synthesize_controller, SynthOutcome, SYNTH_CHUNK};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::DiffError;
use crate::dynamics::DynamicsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("numeric fault at step {step}: {detail}")]
    NumericFault { step: u64, detail: String },
    #[error("{0}")]
    Config(String),
    #[error("invalid configuration: {0}")]
    Invalid(ConfigIssue),
    #[error("parameter and gradient layouts differ")]
    LayoutMismatch,
}

/// Periodic state of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub loss: f64,
    /// Share of the batch with a positive hinge term, when that applies.
    pub violation_fraction: Option<f64>,
    /// Critical points of the learned field found from a seed grid.
    pub critical_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// One entry per optimiser step.
    pub losses: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
}

impl TrainingHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}
