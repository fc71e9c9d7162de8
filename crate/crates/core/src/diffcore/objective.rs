//! Scalar objectives over network values, input gradients and states.
//!
//! An [`Expr`] is evaluated per sample and averaged over the batch. The
//! `InputGrad` leaf makes the objective depend on `∇ₓV`, so its parameter
//! gradient is a second derivative of the network.

use super::{DiffError, Net, ParamVector, Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Coordinate `i` of the state.
    State(usize),
    /// Network output.
    Value,
    /// `∂V/∂xᵢ`.
    InputGrad(usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Tanh(Box<Expr>),
    /// `max(0, ·)`.
    Max0(Box<Expr>),
    Dot(Vec<Expr>, Vec<Expr>),
    NormSq(Vec<Expr>),
    /// Untyped call, resolved by name when the objective is built.
    Primitive { name: String, args: Vec<Expr> },
}

impl Expr {
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn input_grad(dim: usize) -> Vec<Expr> {
        (0..dim).map(Expr::InputGrad).collect()
    }

    fn resolve(self) -> Result<Expr, DiffError> {
        use Expr::*;
        let b = |e: Expr| -> Result<Box<Expr>, DiffError> { Ok(Box::new(e.resolve()?)) };
        let all = |v: Vec<Expr>| v.into_iter().map(Expr::resolve).collect::<Result<Vec<_>, _>>();
        Ok(match self {
            Const(_) | State(_) | Value | InputGrad(_) => self,
            Add(x, y) => Add(b(*x)?, b(*y)?),
            Mul(x, y) => Mul(b(*x)?, b(*y)?),
            Neg(x) => Neg(b(*x)?),
            Exp(x) => Exp(b(*x)?),
            Tanh(x) => Tanh(b(*x)?),
            Max0(x) => Max0(b(*x)?),
            Dot(x, y) => {
                if x.len() != y.len() {
                    return Err(DiffError::Malformed("inner product of unequal lengths".into()));
                }
                Dot(all(x)?, all(y)?)
            }
            NormSq(x) => NormSq(all(x)?),
            Primitive { name, args } => {
                let arity = |n: usize| -> Result<(), DiffError> {
                    if args.len() == n {
                        Ok(())
                    } else {
                        Err(DiffError::Malformed(format!("`{name}` takes {n} arguments, got {}", args.len())))
                    }
                };
                match name.as_str() {
                    "add" | "mul" => {
                        arity(2)?;
                        let mut it = args.into_iter();
                        let (x, y) = (it.next().unwrap(), it.next().unwrap());
                        if name == "add" {
                            Add(b(x)?, b(y)?)
                        } else {
                            Mul(b(x)?, b(y)?)
                        }
                    }
                    "neg" | "exp" | "tanh" | "max" => {
                        arity(1)?;
                        let x = b(args.into_iter().next().unwrap())?;
                        match name.as_str() {
                            "neg" => Neg(x),
                            "exp" => Exp(x),
                            "tanh" => Tanh(x),
                            _ => Max0(x),
                        }
                    }
                    "dot" => {
                        if args.len() % 2 != 0 {
                            return Err(DiffError::Malformed("`dot` needs an even argument count".into()));
                        }
                        let mut x = all(args)?;
                        let y = x.split_off(x.len() / 2);
                        Dot(x, y)
                    }
                    "norm2" => NormSq(all(args)?),
                    _ => return Err(DiffError::UnsupportedPrimitive { name }),
                }
            }
        })
    }

    fn uses_input_grad(&self) -> bool {
        use Expr::*;
        match self {
            InputGrad(_) => true,
            Const(_) | State(_) | Value => false,
            Add(a, b) | Mul(a, b) => a.uses_input_grad() || b.uses_input_grad(),
            Neg(a) | Exp(a) | Tanh(a) | Max0(a) => a.uses_input_grad(),
            Dot(a, b) => a.iter().chain(b).any(Expr::uses_input_grad),
            NormSq(a) => a.iter().any(Expr::uses_input_grad),
            Primitive { args, .. } => args.iter().any(Expr::uses_input_grad),
        }
    }

    fn max_index(&self) -> Option<usize> {
        use Expr::*;
        match self {
            State(i) | InputGrad(i) => Some(*i),
            Const(_) | Value => None,
            Add(a, b) | Mul(a, b) => a.max_index().max(b.max_index()),
            Neg(a) | Exp(a) | Tanh(a) | Max0(a) => a.max_index(),
            Dot(a, b) => a.iter().chain(b).filter_map(Expr::max_index).max(),
            NormSq(a) | Primitive { args: a, .. } => a.iter().filter_map(Expr::max_index).max(),
        }
    }
}

/// A validated expression.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    expr: Expr,
    needs_grad: bool,
}

impl Objective {
    pub fn new(expr: Expr) -> Result<Self, DiffError> {
        let expr = expr.resolve()?;
        let needs_grad = expr.uses_input_grad();
        Ok(Objective { expr, needs_grad })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

struct Ctx {
    rows: usize,
    x: Var,
    v: Var,
    g: Option<Var>,
}

fn emit(tape: &mut Tape, ctx: &Ctx, e: &Expr) -> Var {
    use Expr::*;
    match e {
        Const(c) => tape.fill(ctx.rows, 1, *c),
        State(i) => tape.slice_cols(ctx.x, *i, 1),
        Value => ctx.v,
        InputGrad(i) => tape.slice_cols(ctx.g.expect("gradient recorded"), *i, 1),
        Add(a, b) => {
            let (a, b) = (emit(tape, ctx, a), emit(tape, ctx, b));
            tape.add(a, b)
        }
        Mul(a, b) => {
            let (a, b) = (emit(tape, ctx, a), emit(tape, ctx, b));
            tape.mul(a, b)
        }
        Neg(a) => {
            let a = emit(tape, ctx, a);
            tape.neg(a)
        }
        Exp(a) => {
            let a = emit(tape, ctx, a);
            tape.exp(a)
        }
        Tanh(a) => {
            let a = emit(tape, ctx, a);
            tape.tanh(a)
        }
        Max0(a) => {
            let a = emit(tape, ctx, a);
            tape.relu(a)
        }
        Dot(a, b) => {
            let mut acc = tape.zeros(ctx.rows, 1);
            for (p, q) in a.iter().zip(b) {
                let (p, q) = (emit(tape, ctx, p), emit(tape, ctx, q));
                let t = tape.mul(p, q);
                acc = tape.add(acc, t);
            }
            acc
        }
        NormSq(a) => {
            let mut acc = tape.zeros(ctx.rows, 1);
            for p in a {
                let p = emit(tape, ctx, p);
                let t = tape.mul(p, p);
                acc = tape.add(acc, t);
            }
            acc
        }
        Primitive { .. } => unreachable!("resolved at construction"),
    }
}

fn record(
    tape: &mut Tape,
    net: &(impl Net + ?Sized),
    params: &ParamVector,
    objective: &Objective,
    points: &[f64],
) -> Result<(Vec<Var>, Var), DiffError> {
    let m = net.input_dim();
    if m == 0 || points.is_empty() || points.len() % m != 0 {
        return Err(DiffError::DimensionMismatch { context: "objective points".into(), expected: m, found: points.len() });
    }
    if let Some(i) = objective.expr.max_index() {
        if i >= m {
            return Err(DiffError::DimensionMismatch { context: "objective index".into(), expected: m, found: i + 1 });
        }
    }
    params.ensure_finite()?;
    let rows = points.len() / m;
    let p = params.record(tape);
    let x = tape.leaf(rows, m, points);
    let v = net.record(tape, &p, x)?;
    let g = if objective.needs_grad { Some(tape.grad(v, &[x])[0]) } else { None };
    let ctx = Ctx { rows, x, v, g };
    let per_sample = emit(tape, &ctx, &objective.expr);
    let total = tape.mean(per_sample);
    tape.ensure_finite(total, || "objective".into())?;
    Ok((p, total))
}

/// Batch mean of the objective.
pub fn objective_value(
    net: &(impl Net + ?Sized),
    params: &ParamVector,
    objective: &Objective,
    points: &[f64],
) -> Result<f64, DiffError> {
    let mut tape = Tape::new();
    let (_, total) = record(&mut tape, net, params, objective, points)?;
    Ok(tape.scalar_value(total))
}

pub fn value_and_param_gradient(
    net: &(impl Net + ?Sized),
    params: &ParamVector,
    objective: &Objective,
    points: &[f64],
) -> Result<(f64, ParamVector), DiffError> {
    let mut tape = Tape::new();
    let (p, total) = record(&mut tape, net, params, objective, points)?;
    let grads = tape.grad(total, &p);
    for (g, s) in grads.iter().zip(&params.layout.segments) {
        tape.ensure_finite(*g, || format!("gradient of {}", s.name))?;
    }
    Ok((tape.scalar_value(total), params.gather(&tape, &grads)))
}

/// d(objective)/dθ.
pub fn param_gradient(
    net: &(impl Net + ?Sized),
    params: &ParamVector,
    objective: &Objective,
    points: &[f64],
) -> Result<ParamVector, DiffError> {
    value_and_param_gradient(net, params, objective, points).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_primitive_rejected_at_construction() {
        let e = Expr::Primitive { name: "sinh".into(), args: vec![Expr::Value] };
        assert_eq!(Objective::new(e), Err(DiffError::UnsupportedPrimitive { name: "sinh".into() }));
    }

    #[test]
    fn known_primitives_resolve() {
        let e = Expr::Primitive {
            name: "dot".into(),
            args: vec![Expr::InputGrad(0), Expr::InputGrad(1), Expr::Const(1.0), Expr::Const(2.0)],
        };
        let o = Objective::new(e).unwrap();
        assert!(matches!(o.expr(), Expr::Dot(a, b) if a.len() == 2 && b.len() == 2));
        assert!(o.needs_grad);
    }

    #[test]
    fn bad_arity_is_malformed() {
        let e = Expr::Primitive { name: "exp".into(), args: vec![] };
        assert!(matches!(Objective::new(e), Err(DiffError::Malformed(_))));
    }
}
