use crate::diffcore::{eval_batch, DiffError, Net, ParamVector, Tape, Var};
use crate::nets::Model;

use super::Mat;

/// State feedback `u = π(x)`.
pub trait Policy: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn act(&self, x: &[f64]) -> Vec<f64>;
    /// `B × input_dim → B × output_dim`.
    fn record(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError>;
}

#[derive(Clone, Debug)]
pub struct ZeroPolicy {
    pub state_dim: usize,
    pub input_dim: usize,
}

impl Policy for ZeroPolicy {
    fn input_dim(&self) -> usize {
        self.state_dim
    }

    fn output_dim(&self) -> usize {
        self.input_dim
    }

    fn act(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.input_dim]
    }

    fn record(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        let rows = tape.rows(x);
        Ok(tape.zeros(rows, self.input_dim))
    }
}

/// `u = -K x`.
#[derive(Clone, Debug)]
pub struct LinearPolicy {
    pub k: Mat,
}

impl Policy for LinearPolicy {
    fn input_dim(&self) -> usize {
        self.k.cols
    }

    fn output_dim(&self) -> usize {
        self.k.rows
    }

    fn act(&self, x: &[f64]) -> Vec<f64> {
        self.k.apply(x).into_iter().map(|v| -v).collect()
    }

    fn record(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        let k = tape.leaf(self.k.rows, self.k.cols, &self.k.data);
        let kx = tape.matmul_t(x, k);
        Ok(tape.neg(kx))
    }
}

/// A network controller with fixed parameters.
#[derive(Clone, Debug)]
pub struct NetPolicy {
    pub model: Model,
    pub params: ParamVector,
}

impl NetPolicy {
    pub fn new(model: Model, params: ParamVector) -> Result<Self, DiffError> {
        let expected = model.layout().total_len();
        if params.len() != expected {
            return Err(DiffError::LayoutMismatch { expected, found: params.len() });
        }
        params.ensure_finite()?;
        Ok(NetPolicy { model, params })
    }
}

impl Policy for NetPolicy {
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.model.output_dim()
    }

    fn act(&self, x: &[f64]) -> Vec<f64> {
        match &self.model {
            Model::Mlp(spec) => spec.forward(&self.params.values, x),
            other => eval_batch(other, &self.params, x).unwrap_or_else(|_| vec![f64::NAN; other.output_dim()]),
        }
    }

    fn record(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        let p = self.params.record(tape);
        self.model.record(tape, &p, x)
    }
}
