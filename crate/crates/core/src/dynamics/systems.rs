use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, Tape, Var};

use super::{BoxDomain, DynSystem, DynamicsError, Mat};

/// Smoothed `|x1|`: quadratic inside `|x1| < k`, linear outside, C¹ at the seam.
pub fn g_smooth(x1: f64, k: f64) -> f64 {
    debug_assert!(k > 0.0);
    if x1.abs() < k {
        0.5 * k * (x1 / k) * (x1 / k)
    } else {
        x1.abs() - 0.5 * k
    }
}

/// Derivative of [`g_smooth`].
pub fn g_smooth_deriv(x1: f64, k: f64) -> f64 {
    if x1.abs() < k {
        x1 / k
    } else {
        x1.signum()
    }
}

/// Records `g_smooth` element-wise. The branch is chosen per entry and held
/// fixed for differentiation.
pub fn record_g_smooth(tape: &mut Tape, x1: Var, k: f64) -> Var {
    let (r, c) = tape.shape(x1);
    let inner: Vec<f64> = tape.value(x1).iter().map(|v| if v.abs() < k { 1.0 } else { 0.0 }).collect();
    let outer: Vec<f64> = inner.iter().map(|m| 1.0 - m).collect();
    let sq = tape.square(x1);
    let quad = tape.scale(sq, 0.5 / k);
    let a = tape.abs(x1);
    let lin = tape.shift(a, -0.5 * k);
    let mi = tape.leaf(r, c, &inner);
    let mo = tape.leaf(r, c, &outer);
    let q = tape.mul(quad, mi);
    let l = tape.mul(lin, mo);
    tape.add(q, l)
}

pub const GAIN_SWITCH_K: f64 = 0.02;

/// Two-state system whose `u₁` gain changes sign away from the origin and
/// whose `u₂` gain vanishes on `x₁ = 0`:
///
/// ```text
/// ẋ₁ = x₂
/// ẋ₂ = ½ sin(πx₁) + (20 e^{-2x₁² - ½x₂²} - 10) u₁ + 50 g(x₁) u₂ - u₂/10
/// ```
#[derive(Clone, Debug)]
pub struct GainSwitch {
    domain: BoxDomain,
    pub k: f64,
}

impl Default for GainSwitch {
    fn default() -> Self {
        GainSwitch { domain: BoxDomain::symmetric(2, 1.0), k: GAIN_SWITCH_K }
    }
}

impl DynSystem for GainSwitch {
    fn name(&self) -> &str {
        "gain-switch"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (x1, x2) = (x[0], x[1]);
        let b1 = 20.0 * (-2.0 * x1 * x1 - 0.5 * x2 * x2).exp() - 10.0;
        let b2 = 50.0 * g_smooth(x1, self.k) - 0.1;
        vec![x2, 0.5 * (PI * x1).sin() + b1 * u[0] + b2 * u[1]]
    }

    fn record_rhs(&self, tape: &mut Tape, x: Var, u: Var) -> Result<Var, DiffError> {
        let x1 = tape.slice_cols(x, 0, 1);
        let x2 = tape.slice_cols(x, 1, 1);
        let u1 = tape.slice_cols(u, 0, 1);
        let u2 = tape.slice_cols(u, 1, 1);
        let px = tape.scale(x1, PI);
        let s = tape.sin(px);
        let drift = tape.scale(s, 0.5);
        let a = tape.square(x1);
        let a = tape.scale(a, -2.0);
        let b = tape.square(x2);
        let b = tape.scale(b, -0.5);
        let e = tape.add(a, b);
        let e = tape.exp(e);
        let e = tape.scale(e, 20.0);
        let b1 = tape.shift(e, -10.0);
        let g = record_g_smooth(tape, x1, self.k);
        let g = tape.scale(g, 50.0);
        let b2 = tape.shift(g, -0.1);
        let t1 = tape.mul(b1, u1);
        let t2 = tape.mul(b2, u2);
        let d = tape.add(drift, t1);
        let d = tape.add(d, t2);
        Ok(tape.concat_cols(x2, d))
    }
}

pub const BOUNDED_INPUT_LIMIT: f64 = 5.0;

/// Two-state system with inputs squashed into `(-5, 5)` by `5·tanh`:
///
/// ```text
/// ẋ₁ = x₂
/// ẋ₂ = ½ sin(πx₁) + (10 e^{-2x₁² - 2x₂²} - 5) u₁ + 2 u₂
/// ```
#[derive(Clone, Debug)]
pub struct BoundedInput {
    domain: BoxDomain,
    input_box: BoxDomain,
}

impl Default for BoundedInput {
    fn default() -> Self {
        BoundedInput {
            domain: BoxDomain::symmetric(2, 1.0),
            input_box: BoxDomain::symmetric(2, BOUNDED_INPUT_LIMIT),
        }
    }
}

impl DynSystem for BoundedInput {
    fn name(&self) -> &str {
        "bounded-input"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn input_box(&self) -> Option<&BoxDomain> {
        Some(&self.input_box)
    }

    fn rhs(&self, x: &[f64], u_raw: &[f64]) -> Vec<f64> {
        let (x1, x2) = (x[0], x[1]);
        let u1 = BOUNDED_INPUT_LIMIT * u_raw[0].tanh();
        let u2 = BOUNDED_INPUT_LIMIT * u_raw[1].tanh();
        let b1 = 10.0 * (-2.0 * x1 * x1 - 2.0 * x2 * x2).exp() - 5.0;
        vec![x2, 0.5 * (PI * x1).sin() + b1 * u1 + 2.0 * u2]
    }

    fn record_rhs(&self, tape: &mut Tape, x: Var, u_raw: Var) -> Result<Var, DiffError> {
        let x1 = tape.slice_cols(x, 0, 1);
        let x2 = tape.slice_cols(x, 1, 1);
        let u = tape.tanh(u_raw);
        let u = tape.scale(u, BOUNDED_INPUT_LIMIT);
        let u1 = tape.slice_cols(u, 0, 1);
        let u2 = tape.slice_cols(u, 1, 1);
        let px = tape.scale(x1, PI);
        let s = tape.sin(px);
        let drift = tape.scale(s, 0.5);
        let r = tape.norm_sq_rows(x);
        let r = tape.scale(r, -2.0);
        let e = tape.exp(r);
        let e = tape.scale(e, 10.0);
        let b1 = tape.shift(e, -5.0);
        let t1 = tape.mul(b1, u1);
        let t2 = tape.scale(u2, 2.0);
        let d = tape.add(drift, t1);
        let d = tape.add(d, t2);
        Ok(tape.concat_cols(x2, d))
    }
}

/// `ẋ = A x + B u` on a box.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub a: Mat,
    pub b: Mat,
    domain: BoxDomain,
}

impl LinearSystem {
    pub fn new(a: Mat, b: Mat, domain: BoxDomain) -> Result<Self, DynamicsError> {
        if !a.is_square() || b.rows != a.rows || domain.dim() != a.rows || b.cols == 0 {
            return Err(DynamicsError::Dimension("linear system shapes do not agree".into()));
        }
        Ok(LinearSystem { a, b, domain })
    }

    /// `ẋ = A x` with a single unused input.
    pub fn autonomous(a: Mat, domain: BoxDomain) -> Result<Self, DynamicsError> {
        let n = a.rows;
        LinearSystem::new(a, Mat::zeros(n, 1), domain)
    }
}

impl DynSystem for LinearSystem {
    fn name(&self) -> &str {
        "linear"
    }

    fn state_dim(&self) -> usize {
        self.a.rows
    }

    fn input_dim(&self) -> usize {
        self.b.cols
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let ax = self.a.apply(x);
        let bu = self.b.apply(u);
        ax.iter().zip(&bu).map(|(p, q)| p + q).collect()
    }

    fn record_rhs(&self, tape: &mut Tape, x: Var, u: Var) -> Result<Var, DiffError> {
        let a = tape.leaf(self.a.rows, self.a.cols, &self.a.data);
        let b = tape.leaf(self.b.rows, self.b.cols, &self.b.data);
        let ax = tape.matmul_t(x, a);
        let bu = tape.matmul_t(u, b);
        Ok(tape.add(ax, bu))
    }
}

/// Built-in systems addressable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemId {
    GainSwitch,
    BoundedInput,
}

impl SystemId {
    pub fn build(self) -> Box<dyn DynSystem> {
        match self {
            SystemId::GainSwitch => Box::new(GainSwitch::default()),
            SystemId::BoundedInput => Box::new(BoundedInput::default()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SystemId::GainSwitch => "gain-switch",
            SystemId::BoundedInput => "bounded-input",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gain-switch" => Some(SystemId::GainSwitch),
            "bounded-input" => Some(SystemId::BoundedInput),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rhs_on_tape(sys: &dyn DynSystem, x: &[f64], u: &[f64]) -> (Vec<f64>, Tape) {
        let mut t = Tape::new();
        let xv = t.leaf(1, 2, x);
        let uv = t.leaf(1, 2, u);
        let f = sys.record_rhs(&mut t, xv, uv).unwrap();
        (t.value(f).to_vec(), t)
    }

    #[test]
    fn g_smooth_values() {
        assert_eq!(g_smooth(0.0, 0.02), 0.0);
        assert!((g_smooth(0.01, 0.02) - 0.0025).abs() < 1e-16);
        assert!((g_smooth(0.5, 0.02) - 0.49).abs() < 1e-15);
        assert!((g_smooth(-0.5, 0.02) - 0.49).abs() < 1e-15);
    }

    #[test]
    fn gain_switch_examples() {
        let s = GainSwitch::default();
        assert_eq!(s.rhs(&[0.0, 0.0], &[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(s.rhs(&[0.0, 1.0], &[0.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(s.rhs(&[0.0, 0.0], &[1.0, 0.0]), vec![0.0, 10.0]);
    }

    #[test]
    fn bounded_input_examples() {
        let s = BoundedInput::default();
        assert_eq!(s.rhs(&[0.0, 0.0], &[0.0, 0.0]), vec![0.0, 0.0]);
        let big = s.rhs(&[0.0, 0.0], &[40.0, 0.0]);
        assert!((big[1] - 25.0).abs() < 1e-12);
        let d = s.rhs(&[0.5, 0.0], &[0.0, 0.0]);
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn recorded_rhs_matches_plain() {
        let pts = [[0.3, -0.2], [0.01, 0.5], [-0.9, 0.9], [0.0, 0.0]];
        let us = [[0.7, -1.3], [2.0, 0.1], [-0.4, 3.0], [0.0, 0.0]];
        let systems: [Box<dyn DynSystem>; 2] = [Box::new(GainSwitch::default()), Box::new(BoundedInput::default())];
        for s in &systems {
            for (x, u) in pts.iter().zip(&us) {
                let (f, _) = rhs_on_tape(s.as_ref(), x, u);
                let g = s.rhs(x, u);
                for (a, b) in f.iter().zip(&g) {
                    assert!((a - b).abs() < 1e-13, "{} {x:?}: {a} vs {b}", s.name());
                }
            }
        }
    }

    #[test]
    fn recorded_g_smooth_derivative() {
        for &x in &[-0.5, -0.015, 0.0, 0.005, 0.019, 0.3] {
            let mut t = Tape::new();
            let v = t.leaf(1, 1, &[x]);
            let g = record_g_smooth(&mut t, v, 0.02);
            let d = t.grad(g, &[v])[0];
            assert!((t.scalar_value(d) - g_smooth_deriv(x, 0.02)).abs() < 1e-14);
        }
    }
}
