use crate::diffcore::{DiffError, Net, ParamDef, Tape, Var};

use super::{MlpSpec, NetError};

fn backbone(dim: usize, hidden: &[usize], out: usize, bias: bool) -> Result<MlpSpec, NetError> {
    MlpSpec::new(std::iter::once(dim).chain(hidden.iter().copied()).chain([out]).collect(), bias)
}

/// Unconstrained scalar MLP used directly as `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainMlp {
    pub net: MlpSpec,
}

impl PlainMlp {
    pub fn new(dim: usize, hidden: &[usize]) -> Result<Self, NetError> {
        Ok(PlainMlp { net: backbone(dim, hidden, 1, true)? })
    }
}

impl Net for PlainMlp {
    fn input_dim(&self) -> usize {
        self.net.in_dim()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn param_defs(&self) -> Vec<ParamDef> {
        self.net.defs("h.", 1.0)
    }

    fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, DiffError> {
        Ok(self.net.record_mlp(tape, params, x))
    }
}

/// `|h(x) - h(0)| + γ‖x‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovNet {
    pub h: MlpSpec,
    pub gamma: f64,
}

impl LyapunovNet {
    pub fn new(dim: usize, hidden: &[usize], gamma: f64) -> Result<Self, NetError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(NetError::Invalid("lyapunov-net gamma must be positive".into()));
        }
        Ok(LyapunovNet { h: backbone(dim, hidden, 1, true)?, gamma })
    }
}

impl Net for LyapunovNet {
    fn input_dim(&self) -> usize {
        self.h.in_dim()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn param_defs(&self) -> Vec<ParamDef> {
        self.h.defs("h.", 1.0)
    }

    fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, DiffError> {
        let (rows, m) = tape.shape(x);
        let hx = self.h.record_mlp(tape, params, x);
        let origin = tape.zeros(1, m);
        let h0 = self.h.record_mlp(tape, params, origin);
        let h0 = tape.broadcast_rows(h0, rows);
        let d = tape.sub(hx, h0);
        let a = tape.abs(d);
        let r = tape.norm_sq_rows(x);
        let r = tape.scale(r, self.gamma);
        Ok(tape.add(a, r))
    }
}

/// `½β‖x‖² + ½‖φ(x)‖²` with a bias-free `φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Wei {
    pub phi: MlpSpec,
    pub beta: f64,
}

impl Wei {
    pub fn new(dim: usize, hidden: &[usize], features: usize, beta: f64) -> Result<Self, NetError> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(NetError::Invalid("wei beta must be non-negative".into()));
        }
        Ok(Wei { phi: backbone(dim, hidden, features, false)?, beta })
    }
}

impl Net for Wei {
    fn input_dim(&self) -> usize {
        self.phi.in_dim()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn param_defs(&self) -> Vec<ParamDef> {
        self.phi.defs("phi.", 1.0)
    }

    fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, DiffError> {
        let f = self.phi.record_mlp(tape, params, x);
        let f = tape.norm_sq_rows(f);
        let r = tape.norm_sq_rows(x);
        let r = tape.scale(r, self.beta);
        let s = tape.add(r, f);
        Ok(tape.scale(s, 0.5))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{eval_batch, ParamVector};

    #[test]
    fn lyapunov_net_with_zero_weights() {
        let n = LyapunovNet::new(2, &[64, 64, 64], 1e-2).unwrap();
        let p = ParamVector::zeros(n.layout());
        let v = eval_batch(&n, &p, &[1.0, 1.0]).unwrap()[0];
        assert!((v - 0.02).abs() < 1e-16);
    }

    #[test]
    fn wei_with_zero_weights() {
        let n = Wei::new(2, &[64, 64, 64], 64, 1e-6).unwrap();
        let p = ParamVector::zeros(n.layout());
        let v = eval_batch(&n, &p, &[1.0, 0.0]).unwrap()[0];
        assert!((v - 5e-7).abs() < 1e-20);
    }

    #[test]
    fn plain_mlp_reports_raw_output() {
        let n = PlainMlp::new(2, &[8]).unwrap();
        let mut p = ParamVector::zeros(n.layout());
        p.segment_mut("h.b1").unwrap()[0] = -1.0;
        assert_eq!(eval_batch(&n, &p, &[0.0, 0.0]).unwrap(), vec![-1.0]);
    }
}
