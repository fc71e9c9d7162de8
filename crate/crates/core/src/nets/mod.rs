//! Network architectures: MLP blocks, coupling layers, PolarNet and baselines.

mod arch;
mod baselines;
mod coupling;
mod mlp;
mod polarnet;

pub use arch::{init_params, lyapunov_value, ArchSpec, Model};
pub use baselines::{LyapunovNet, PlainMlp, Wei};
pub use coupling::CouplingSpec;
pub use mlp::MlpSpec;
pub use polarnet::{psi_forward, psi_inverse, PolarNetSpec};

use thiserror::Error;

use crate::diffcore::{DiffError, ParamVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    Invalid(String),
}

fn layer_params(layer: &CouplingSpec, params: &ParamVector) -> Result<(), DiffError> {
    if params.len() != layer.param_count() {
        return Err(DiffError::LayoutMismatch { expected: layer.param_count(), found: params.len() });
    }
    params.ensure_finite()
}

/// One coupling layer applied to a single state.
pub fn coupling_forward(layer: &CouplingSpec, params: &ParamVector, y: &[f64]) -> Result<Vec<f64>, DiffError> {
    layer_params(layer, params)?;
    if y.len() != layer.dim {
        return Err(DiffError::DimensionMismatch { context: "state".into(), expected: layer.dim, found: y.len() });
    }
    layer.forward_row(&params.values, y, "coupling")
}

pub fn coupling_inverse(layer: &CouplingSpec, params: &ParamVector, z: &[f64]) -> Result<Vec<f64>, DiffError> {
    layer_params(layer, params)?;
    if z.len() != layer.dim {
        return Err(DiffError::DimensionMismatch { context: "state".into(), expected: layer.dim, found: z.len() });
    }
    layer.inverse_row(&params.values, z, "coupling")
}
