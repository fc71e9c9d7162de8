use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, Net, ParamDef, ParamVector, Tape, Var};

use super::{LyapunovNet, MlpSpec, NetError, PlainMlp, PolarNetSpec, Wei};

fn two() -> usize {
    2
}
fn four() -> usize {
    4
}
fn hidden12() -> Vec<usize> {
    vec![12, 12]
}
fn hidden64() -> Vec<usize> {
    vec![64, 64, 64]
}
fn features64() -> usize {
    64
}
fn gamma_default() -> f64 {
    1e-2
}
fn beta_default() -> f64 {
    1e-6
}

/// Compact architecture descriptor. It fully determines the parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArchSpec {
    #[serde(rename = "polarnet")]
    PolarNet {
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "four")]
        layers: usize,
        #[serde(default = "hidden12")]
        hidden: Vec<usize>,
    },
    PlainMlp {
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "hidden64")]
        hidden: Vec<usize>,
    },
    LyapunovNet {
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "hidden64")]
        hidden: Vec<usize>,
        #[serde(default = "gamma_default")]
        gamma: f64,
    },
    Wei {
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "hidden64")]
        hidden: Vec<usize>,
        #[serde(default = "features64")]
        features: usize,
        #[serde(default = "beta_default")]
        beta: f64,
    },
    Mlp {
        widths: Vec<usize>,
        #[serde(default)]
        bias: bool,
    },
}

impl ArchSpec {
    pub fn polarnet(dim: usize) -> Self {
        ArchSpec::PolarNet { dim, layers: 4, hidden: hidden12() }
    }

    pub fn plain_mlp(dim: usize) -> Self {
        ArchSpec::PlainMlp { dim, hidden: hidden64() }
    }

    pub fn lyapunov_net(dim: usize) -> Self {
        ArchSpec::LyapunovNet { dim, hidden: hidden64(), gamma: gamma_default() }
    }

    pub fn wei(dim: usize) -> Self {
        ArchSpec::Wei { dim, hidden: hidden64(), features: features64(), beta: beta_default() }
    }

    /// Bias-free controller `[m, 32, 32, n]`.
    pub fn controller(m: usize, n: usize) -> Self {
        ArchSpec::Mlp { widths: vec![m, 32, 32, n], bias: false }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ArchSpec::PolarNet { .. } => "polarnet",
            ArchSpec::PlainMlp { .. } => "plain-mlp",
            ArchSpec::LyapunovNet { .. } => "lyapunov-net",
            ArchSpec::Wei { .. } => "wei",
            ArchSpec::Mlp { .. } => "mlp",
        }
    }

    /// True when `V(0) = 0` and `V ≥ 0` hold for every parameter value.
    pub fn is_structurally_positive_definite(&self) -> bool {
        matches!(self, ArchSpec::PolarNet { .. } | ArchSpec::LyapunovNet { .. } | ArchSpec::Wei { .. })
    }

    pub fn build(&self) -> Result<Model, NetError> {
        Ok(match self {
            ArchSpec::PolarNet { dim, layers, hidden } => Model::PolarNet(PolarNetSpec::new(*dim, *layers, hidden)?),
            ArchSpec::PlainMlp { dim, hidden } => Model::PlainMlp(PlainMlp::new(*dim, hidden)?),
            ArchSpec::LyapunovNet { dim, hidden, gamma } => {
                Model::LyapunovNet(LyapunovNet::new(*dim, hidden, *gamma)?)
            }
            ArchSpec::Wei { dim, hidden, features, beta } => Model::Wei(Wei::new(*dim, hidden, *features, *beta)?),
            ArchSpec::Mlp { widths, bias } => Model::Mlp(MlpSpec::new(widths.clone(), *bias)?),
        })
    }
}

/// A built architecture.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    PolarNet(PolarNetSpec),
    PlainMlp(PlainMlp),
    LyapunovNet(LyapunovNet),
    Wei(Wei),
    Mlp(MlpSpec),
}

impl Model {
    fn inner(&self) -> &dyn Net {
        match self {
            Model::PolarNet(n) => n,
            Model::PlainMlp(n) => n,
            Model::LyapunovNet(n) => n,
            Model::Wei(n) => n,
            Model::Mlp(n) => n,
        }
    }

    pub fn is_structurally_positive_definite(&self) -> bool {
        matches!(self, Model::PolarNet(_) | Model::LyapunovNet(_) | Model::Wei(_))
    }

    pub fn as_polarnet(&self) -> Option<&PolarNetSpec> {
        match self {
            Model::PolarNet(p) => Some(p),
            _ => None,
        }
    }
}

impl Net for Model {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner().output_dim()
    }

    fn param_defs(&self) -> Vec<ParamDef> {
        self.inner().param_defs()
    }

    fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, DiffError> {
        self.inner().record(tape, params, x)
    }
}

/// Deterministic scaled-uniform initialisation.
pub fn init_params(net: &(impl Net + ?Sized), seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ParamVector::random(&net.param_defs(), &mut rng)
}

/// `V(x)` for a scalar-output architecture.
pub fn lyapunov_value(net: &(impl Net + ?Sized), params: &ParamVector, x: &[f64]) -> Result<f64, DiffError> {
    if net.output_dim() != 1 {
        return Err(DiffError::DimensionMismatch { context: "scalar output".into(), expected: 1, found: net.output_dim() });
    }
    if x.len() != net.input_dim() {
        return Err(DiffError::DimensionMismatch { context: "state".into(), expected: net.input_dim(), found: x.len() });
    }
    params.ensure_finite()?;
    Ok(crate::diffcore::eval_batch(net, params, x)?[0])
}
