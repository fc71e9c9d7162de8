//! Reverse-mode differentiation over batched dense blocks.

mod fd;
mod objective;
mod params;
mod tape;

pub use fd::{finite_difference_grad, finite_difference_grad_pure};
pub use objective::{objective_value, param_gradient, value_and_param_gradient, Expr, Objective};
pub use params::{Layout, ParamDef, ParamVector, Segment};
pub use tape::{Op, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("non-finite value in {layer}")]
    NumericFault { layer: String },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: String, expected: usize, found: usize },
    #[error("parameter layout mismatch: expected {expected} values, found {found}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("unsupported primitive `{name}`")]
    UnsupportedPrimitive { name: String },
    #[error("malformed expression: {0}")]
    Malformed(String),
}

/// A differentiable map with flat parameter storage.
///
/// `record` receives one tape leaf per parameter segment, in the order given
/// by `param_defs`, and a `B × input_dim` block of inputs. It returns a
/// `B × output_dim` block. Rows must not interact.
pub trait Net: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn param_defs(&self) -> Vec<ParamDef>;

    fn layout(&self) -> Layout {
        Layout::from_defs(&self.param_defs())
    }

    fn segment_count(&self) -> usize {
        self.param_defs().len()
    }

    fn record(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, DiffError>;
}

/// A scalar function of the state, evaluated on batches.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    /// `B × dim → B × 1`.
    fn record(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError>;

    fn values(&self, xs: &[f64]) -> Result<Vec<f64>, DiffError> {
        let m = self.dim();
        let mut tape = Tape::new();
        let x = tape.leaf(xs.len() / m, m, xs);
        let v = self.record(&mut tape, x)?;
        Ok(tape.value(v).to_vec())
    }

    fn value(&self, x: &[f64]) -> Result<f64, DiffError> {
        Ok(self.values(x)?[0])
    }

    /// Values and input gradients for a batch of states.
    fn values_and_grads(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), DiffError> {
        let m = self.dim();
        let mut tape = Tape::new();
        let x = tape.leaf(xs.len() / m, m, xs);
        let v = self.record(&mut tape, x)?;
        let g = tape.grad(v, &[x])[0];
        tape.ensure_finite(g, || "input gradient".into())?;
        Ok((tape.value(v).to_vec(), tape.value(g).to_vec()))
    }
}

/// A network paired with concrete parameters, viewed as a scalar field.
#[derive(Clone, Copy)]
pub struct BoundNet<'a, N: Net + ?Sized> {
    pub net: &'a N,
    pub params: &'a ParamVector,
}

impl<'a, N: Net + ?Sized> BoundNet<'a, N> {
    pub fn new(net: &'a N, params: &'a ParamVector) -> Self {
        BoundNet { net, params }
    }
}

impl<N: Net + ?Sized> ScalarField for BoundNet<'_, N> {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn record(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        let p = self.params.record(tape);
        self.net.record(tape, &p, x)
    }
}

fn check_input(net: &(impl Net + ?Sized), params: &ParamVector, len: usize) -> Result<(), DiffError> {
    let m = net.input_dim();
    if m == 0 || len % m != 0 || len == 0 {
        return Err(DiffError::DimensionMismatch { context: "input".into(), expected: m, found: len });
    }
    if net.output_dim() != 1 {
        return Err(DiffError::DimensionMismatch {
            context: "scalar output".into(),
            expected: 1,
            found: net.output_dim(),
        });
    }
    let expected = net.layout().total_len();
    if params.len() != expected {
        return Err(DiffError::LayoutMismatch { expected, found: params.len() });
    }
    params.ensure_finite()
}

/// Output and input gradient of a scalar network at a single state.
pub fn value_and_input_grad(
    net: &(impl Net + ?Sized),
    params: &ParamVector,
    x: &[f64],
) -> Result<(f64, Vec<f64>), DiffError> {
    if x.len() != net.input_dim() {
        return Err(DiffError::DimensionMismatch {
            context: "input".into(),
            expected: net.input_dim(),
            found: x.len(),
        });
    }
    let (v, g) = value_and_input_grad_batch(net, params, x)?;
    Ok((v[0], g))
}

/// Batched form: `xs` is row-major `B × input_dim`.
pub fn value_and_input_grad_batch(
    net: &(impl Net + ?Sized),
    params: &ParamVector,
    xs: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), DiffError> {
    check_input(net, params, xs.len())?;
    let m = net.input_dim();
    let mut tape = Tape::new();
    let p = params.record(&mut tape);
    let x = tape.leaf(xs.len() / m, m, xs);
    let v = net.record(&mut tape, &p, x)?;
    tape.ensure_finite(v, || "network output".into())?;
    let g = tape.grad(v, &[x])[0];
    tape.ensure_finite(g, || "input gradient".into())?;
    Ok((tape.value(v).to_vec(), tape.value(g).to_vec()))
}

/// Network outputs for a batch, without gradients.
pub fn eval_batch(
    net: &(impl Net + ?Sized),
    params: &ParamVector,
    xs: &[f64],
) -> Result<Vec<f64>, DiffError> {
    let m = net.input_dim();
    if m == 0 || xs.len() % m != 0 {
        return Err(DiffError::DimensionMismatch { context: "input".into(), expected: m, found: xs.len() });
    }
    let mut tape = Tape::new();
    let p = params.record(&mut tape);
    let x = tape.leaf(xs.len() / m, m, xs);
    let y = net.record(&mut tape, &p, x)?;
    tape.ensure_finite(y, || "network output".into())?;
    Ok(tape.value(y).to_vec())
}
