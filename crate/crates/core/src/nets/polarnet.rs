use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, Net, ParamDef, ParamVector, Tape, Var};

use super::{CouplingSpec, NetError};

/// `V(x) = ‖Ψ(x)‖²` with `Ψ` a stack of affine coupling layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarNetSpec {
    pub dim: usize,
    pub layers: Vec<CouplingSpec>,
}

impl PolarNetSpec {
    /// `n_layers` couplings splitting at `⌈dim/2⌉`. The first layer keeps the
    /// high block and transforms the low one; later layers alternate.
    pub fn new(dim: usize, n_layers: usize, hidden: &[usize]) -> Result<Self, NetError> {
        if dim < 2 {
            return Err(NetError::Invalid("PolarNet needs at least two state dimensions".into()));
        }
        if n_layers == 0 {
            return Err(NetError::Invalid("PolarNet needs at least one coupling layer".into()));
        }
        let split = dim.div_ceil(2);
        let layers = (0..n_layers)
            .map(|l| CouplingSpec::new(dim, split, l % 2 == 1, hidden))
            .collect::<Result<_, _>>()?;
        Ok(PolarNetSpec { dim, layers })
    }

    pub fn validate(&self) -> Result<(), NetError> {
        for (l, c) in self.layers.iter().enumerate() {
            c.validate()?;
            if c.dim != self.dim {
                return Err(NetError::Invalid(format!("layer {l} has dimension {}", c.dim)));
            }
            if l > 0 && c.keep_low == self.layers[l - 1].keep_low {
                return Err(NetError::Invalid(format!("layer {l} preserves the same block as layer {}", l - 1)));
            }
        }
        if self.layers.is_empty() {
            return Err(NetError::Invalid("PolarNet has no layers".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(CouplingSpec::param_count).sum()
    }

    fn layer_slices<'a>(&self, p: &'a [f64]) -> Vec<&'a [f64]> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|c| {
                let s = &p[off..off + c.param_count()];
                off += c.param_count();
                s
            })
            .collect()
    }

    /// Records `Ψ(x)` for a batch.
    pub fn record_psi(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, DiffError> {
        let mut y = x;
        let mut seg = 0;
        for (l, c) in self.layers.iter().enumerate() {
            let n = c.segment_count();
            y = c.record_labeled(tape, &params[seg..seg + n], y, &format!("coupling[{l}]"))?;
            seg += n;
        }
        Ok(y)
    }

    pub fn psi_row(&self, p: &[f64], x: &[f64]) -> Result<Vec<f64>, DiffError> {
        let mut y = x.to_vec();
        for (l, (c, pl)) in self.layers.iter().zip(self.layer_slices(p)).enumerate() {
            y = c.forward_row(pl, &y, &format!("coupling[{l}]"))?;
        }
        Ok(y)
    }

    pub fn psi_inverse_row(&self, p: &[f64], z: &[f64]) -> Result<Vec<f64>, DiffError> {
        let slices = self.layer_slices(p);
        let mut y = z.to_vec();
        for l in (0..self.layers.len()).rev() {
            y = self.layers[l].inverse_row(slices[l], &y, &format!("coupling[{l}]"))?;
        }
        Ok(y)
    }

    /// Largest |f_s| over all layers along the forward pass of each row.
    pub fn max_abs_log_scale(&self, p: &[f64], rows: &[f64]) -> Result<f64, DiffError> {
        let slices = self.layer_slices(p);
        let mut worst = 0.0f64;
        for x in rows.chunks_exact(self.dim) {
            let mut y = x.to_vec();
            for (l, c) in self.layers.iter().enumerate() {
                worst = worst.max(c.max_abs_log_scale(slices[l], &y));
                y = c.forward_row(slices[l], &y, &format!("coupling[{l}]"))?;
            }
        }
        Ok(worst)
    }
}

impl Net for PolarNetSpec {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn param_defs(&self) -> Vec<ParamDef> {
        self.layers.iter().enumerate().flat_map(|(l, c)| c.defs(&format!("coupling{l}."))).collect()
    }

    fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, DiffError> {
        let z = self.record_psi(tape, params, x)?;
        Ok(tape.norm_sq_rows(z))
    }
}

fn check(spec: &PolarNetSpec, params: &ParamVector, x: &[f64]) -> Result<(), DiffError> {
    if x.len() != spec.dim {
        return Err(DiffError::DimensionMismatch { context: "state".into(), expected: spec.dim, found: x.len() });
    }
    if params.len() != spec.param_count() {
        return Err(DiffError::LayoutMismatch { expected: spec.param_count(), found: params.len() });
    }
    params.ensure_finite()
}

pub fn psi_forward(spec: &PolarNetSpec, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>, DiffError> {
    check(spec, params, x)?;
    spec.psi_row(&params.values, x)
}

pub fn psi_inverse(spec: &PolarNetSpec, params: &ParamVector, z: &[f64]) -> Result<Vec<f64>, DiffError> {
    check(spec, params, z)?;
    spec.psi_inverse_row(&params.values, z)
}
