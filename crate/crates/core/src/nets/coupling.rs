use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, Net, ParamDef, Tape, Var};

use super::{MlpSpec, NetError};

/// Affine coupling layer `z = exp(f_s(a)) ⊙ b + f_t(a)`, where `a` is the
/// preserved block and `b` the transformed one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub dim: usize,
    /// Size of the low block `y[..split]`.
    pub split: usize,
    /// Whether the low block is the one passed through.
    pub keep_low: bool,
    pub scale_net: MlpSpec,
    pub shift_net: MlpSpec,
}

pub(crate) const COUPLING_GAIN: f64 = 0.5;

impl CouplingSpec {
    /// Layer with tanh sub-networks of the given hidden widths; `f_t` has no bias.
    pub fn new(dim: usize, split: usize, keep_low: bool, hidden: &[usize]) -> Result<Self, NetError> {
        if dim < 2 || split == 0 || split >= dim {
            return Err(NetError::Invalid(format!("split {split} is not inside 1..{dim}")));
        }
        let (kept, moved) = if keep_low { (split, dim - split) } else { (dim - split, split) };
        let widths = |out| std::iter::once(kept).chain(hidden.iter().copied()).chain([out]).collect();
        Ok(CouplingSpec {
            dim,
            split,
            keep_low,
            scale_net: MlpSpec::new(widths(moved), true)?,
            shift_net: MlpSpec::new(widths(moved), false)?,
        })
    }

    pub fn validate(&self) -> Result<(), NetError> {
        self.scale_net.validate()?;
        self.shift_net.validate()?;
        let (k, t) = (self.kept_range(), self.moved_range());
        if self.split == 0 || self.split >= self.dim {
            return Err(NetError::Invalid("coupling split out of range".into()));
        }
        if self.scale_net.in_dim() != k.len() || self.shift_net.in_dim() != k.len() {
            return Err(NetError::Invalid("coupling sub-network input width differs from preserved block".into()));
        }
        if self.scale_net.out_dim() != t.len() || self.shift_net.out_dim() != t.len() {
            return Err(NetError::Invalid("coupling sub-network output width differs from transformed block".into()));
        }
        if self.shift_net.bias {
            return Err(NetError::Invalid("coupling shift network must be bias-free".into()));
        }
        Ok(())
    }

    pub fn kept_range(&self) -> std::ops::Range<usize> {
        if self.keep_low {
            0..self.split
        } else {
            self.split..self.dim
        }
    }

    pub fn moved_range(&self) -> std::ops::Range<usize> {
        if self.keep_low {
            self.split..self.dim
        } else {
            0..self.split
        }
    }

    pub fn param_count(&self) -> usize {
        self.scale_net.param_count() + self.shift_net.param_count()
    }

    pub fn defs(&self, prefix: &str) -> Vec<ParamDef> {
        let mut d = self.scale_net.defs(&format!("{prefix}scale."), COUPLING_GAIN);
        d.extend(self.shift_net.defs(&format!("{prefix}shift."), COUPLING_GAIN));
        d
    }

    fn scale_segments(&self) -> usize {
        self.scale_net.n_layers() * self.scale_net.segments_per_layer()
    }

    pub(crate) fn record_labeled(
        &self,
        tape: &mut Tape,
        params: &[Var],
        y: Var,
        label: &str,
    ) -> Result<Var, DiffError> {
        let (k, t) = (self.kept_range(), self.moved_range());
        let ns = self.scale_segments();
        let kept = tape.slice_cols(y, k.start, k.len());
        let moved = tape.slice_cols(y, t.start, t.len());
        let s = self.scale_net.record_mlp(tape, &params[..ns], kept);
        let es = tape.exp(s);
        tape.ensure_finite(es, || format!("{label}.scale"))?;
        let shift = self.shift_net.record_mlp(tape, &params[ns..], kept);
        let scaled = tape.mul(es, moved);
        let z = tape.add(scaled, shift);
        tape.ensure_finite(z, || label.to_string())?;
        Ok(if self.keep_low { tape.concat_cols(kept, z) } else { tape.concat_cols(z, kept) })
    }

    fn sub_outputs(&self, p: &[f64], y: &[f64], label: &str) -> Result<(Vec<f64>, Vec<f64>), DiffError> {
        let kept = &y[self.kept_range()];
        let ns = self.scale_net.param_count();
        let mut s = self.scale_net.forward(&p[..ns], kept);
        let t = self.shift_net.forward(&p[ns..], kept);
        for v in &mut s {
            *v = v.exp();
            if !v.is_finite() {
                return Err(DiffError::NumericFault { layer: format!("{label}.scale") });
            }
        }
        Ok((s, t))
    }

    /// Forward map of one row against this layer's flat parameter slice.
    pub fn forward_row(&self, p: &[f64], y: &[f64], label: &str) -> Result<Vec<f64>, DiffError> {
        let (es, t) = self.sub_outputs(p, y, label)?;
        let mut out = y.to_vec();
        for (i, j) in self.moved_range().enumerate() {
            out[j] = es[i] * y[j] + t[i];
        }
        finite_row(out, label)
    }

    /// Algebraic inverse of [`forward_row`](Self::forward_row).
    pub fn inverse_row(&self, p: &[f64], z: &[f64], label: &str) -> Result<Vec<f64>, DiffError> {
        let (es, t) = self.sub_outputs(p, z, label)?;
        let mut out = z.to_vec();
        for (i, j) in self.moved_range().enumerate() {
            out[j] = (z[j] - t[i]) / es[i];
        }
        finite_row(out, label)
    }

    /// Largest |f_s| seen on the given row.
    pub(crate) fn max_abs_log_scale(&self, p: &[f64], y: &[f64]) -> f64 {
        let ns = self.scale_net.param_count();
        self.scale_net.forward(&p[..ns], &y[self.kept_range()]).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn finite_row(v: Vec<f64>, label: &str) -> Result<Vec<f64>, DiffError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(DiffError::NumericFault { layer: label.to_string() })
    }
}

impl Net for CouplingSpec {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn param_defs(&self) -> Vec<ParamDef> {
        self.defs("")
    }

    fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, DiffError> {
        self.record_labeled(tape, params, x, "coupling")
    }
}
