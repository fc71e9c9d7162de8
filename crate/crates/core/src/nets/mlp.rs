use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, Net, ParamDef, Tape, Var};

use super::NetError;

/// Fully connected tanh network with an identity output layer.
///
/// Weights are stored `out × in`, so a layer is `h · Wᵀ + b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub bias: bool,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, bias: bool) -> Result<Self, NetError> {
        let spec = MlpSpec { widths, bias };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.widths.len() < 2 {
            return Err(NetError::Invalid("an MLP needs at least input and output widths".into()));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(NetError::Invalid("MLP widths must be positive".into()));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn in_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + if self.bias { w[1] } else { 0 })
            .sum()
    }

    pub fn segments_per_layer(&self) -> usize {
        if self.bias {
            2
        } else {
            1
        }
    }

    /// Segment definitions with a `U(-gain/√fan_in, gain/√fan_in)` bound.
    pub fn defs(&self, prefix: &str, gain: f64) -> Vec<ParamDef> {
        let mut out = Vec::with_capacity(self.n_layers() * self.segments_per_layer());
        for (l, w) in self.widths.windows(2).enumerate() {
            let bound = gain / (w[0] as f64).sqrt();
            out.push(ParamDef { name: format!("{prefix}w{l}"), rows: w[1], cols: w[0], bound });
            if self.bias {
                out.push(ParamDef { name: format!("{prefix}b{l}"), rows: 1, cols: w[1], bound });
            }
        }
        out
    }

    pub fn record_mlp(&self, tape: &mut Tape, params: &[Var], x: Var) -> Var {
        let rows = tape.rows(x);
        let per = self.segments_per_layer();
        let mut h = x;
        for l in 0..self.n_layers() {
            h = tape.matmul_t(h, params[l * per]);
            if self.bias {
                let b = tape.broadcast_rows(params[l * per + 1], rows);
                h = tape.add(h, b);
            }
            if l + 1 < self.n_layers() {
                h = tape.tanh(h);
            }
        }
        h
    }

    /// Plain evaluation of one input row against a flat parameter slice.
    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(p.len(), self.param_count());
        debug_assert_eq!(x.len(), self.in_dim());
        let mut h = x.to_vec();
        let mut off = 0;
        for (l, w) in self.widths.windows(2).enumerate() {
            let (ni, no) = (w[0], w[1]);
            let wm = &p[off..off + ni * no];
            off += ni * no;
            let mut next: Vec<f64> = if self.bias {
                let b = &p[off..off + no];
                off += no;
                b.to_vec()
            } else {
                vec![0.0; no]
            };
            for (j, o) in next.iter_mut().enumerate() {
                *o += wm[j * ni..(j + 1) * ni].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < self.n_layers() {
                for o in &mut next {
                    *o = o.tanh();
                }
            }
            h = next;
        }
        h
    }
}

impl Net for MlpSpec {
    fn input_dim(&self) -> usize {
        self.in_dim()
    }

    fn output_dim(&self) -> usize {
        self.out_dim()
    }

    fn param_defs(&self) -> Vec<ParamDef> {
        self.defs("", 1.0)
    }

    fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, DiffError> {
        Ok(self.record_mlp(tape, params, x))
    }
}
