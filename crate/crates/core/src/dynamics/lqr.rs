use serde::{Deserialize, Serialize};

use super::linalg::{is_hurwitz, lyapunov_solve};
use super::{DynSystem, DynamicsError, Mat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub a: Mat,
    pub b: Mat,
}

/// Central-difference Jacobians of the right-hand side at `(0, 0)`.
pub fn linearize(sys: &(impl DynSystem + ?Sized), h: f64) -> Result<LinearModel, DynamicsError> {
    if !(h > 0.0) {
        return Err(DynamicsError::InvalidStep(h));
    }
    let (m, n) = (sys.state_dim(), sys.input_dim());
    let origin = vec![0.0; m];
    if !sys.domain().contains(&origin) {
        return Err(DynamicsError::OutsideDomain(origin));
    }
    let u0 = vec![0.0; n];
    let mut a = Mat::zeros(m, m);
    let mut b = Mat::zeros(m, n);
    let mut x = origin.clone();
    for j in 0..m {
        x[j] = h;
        let fp = sys.rhs(&x, &u0);
        x[j] = -h;
        let fm = sys.rhs(&x, &u0);
        x[j] = 0.0;
        for i in 0..m {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let mut u = u0.clone();
    for j in 0..n {
        u[j] = h;
        let fp = sys.rhs(&origin, &u);
        u[j] = -h;
        let fm = sys.rhs(&origin, &u);
        u[j] = 0.0;
        for i in 0..m {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(DynamicsError::NumericFault("non-finite Jacobian".into()));
    }
    Ok(LinearModel { a, b })
}

/// `AᵀP + PA - PBR⁻¹BᵀP + Q`.
pub fn care_residual(model: &LinearModel, q: &Mat, r: &Mat, p: &Mat) -> Option<Mat> {
    let rinv = r.inverse()?;
    let (a, b) = (&model.a, &model.b);
    let pb = p * b;
    let quad = &(&pb * &rinv) * &pb.t();
    let lin = &(&a.t() * p) + &(p * a);
    Some(&(&lin - &quad) + q)
}

pub const KLEINMAN_MAX_ITER: usize = 200;
pub const KLEINMAN_TOL: f64 = 1e-10;

/// A gain `K` with `A - BK` Hurwitz.
///
/// Tries `K = c·Bᵀ` for growing `c` first, then falls back to the Bass
/// construction `K = BᵀZ⁻¹` with `(A + βI)Z + Z(A + βI)ᵀ = BBᵀ`.
pub fn stabilizing_gain(model: &LinearModel) -> Result<Mat, DynamicsError> {
    let (a, b) = (&model.a, &model.b);
    let bt = b.t();
    let mut c = 1e-3;
    while c <= 1e6 {
        let k = bt.scale(c);
        if is_hurwitz(&(a - &(b * &k))) {
            return Ok(k);
        }
        c *= 2.0;
    }
    let n = a.rows;
    let beta = a.frobenius() + 1.0;
    let shifted = a + &Mat::identity(n).scale(beta);
    let z = lyapunov_solve(&shifted, &(b * &bt)).ok_or(DynamicsError::NotStabilizable)?;
    let z = z.symmetrize();
    if !z.is_positive_definite() {
        return Err(DynamicsError::NotStabilizable);
    }
    let k = &bt * &z.inverse().ok_or(DynamicsError::NotStabilizable)?;
    if is_hurwitz(&(a - &(b * &k))) {
        Ok(k)
    } else {
        Err(DynamicsError::NotStabilizable)
    }
}

/// Continuous-time LQR by Kleinman's Newton iteration.
///
/// Returns `(K, P)` with `K = R⁻¹BᵀP` and `P` the stabilising solution of the
/// algebraic Riccati equation.
pub fn lqr_gain(model: &LinearModel, q: &Mat, r: &Mat) -> Result<(Mat, Mat), DynamicsError> {
    let (a, b) = (&model.a, &model.b);
    let (m, n) = (a.rows, b.cols);
    if !a.is_square() || b.rows != m || (q.rows, q.cols) != (m, m) || (r.rows, r.cols) != (n, n) {
        return Err(DynamicsError::Dimension("LQR weights do not match the model".into()));
    }
    if !q.is_symmetric(1e-12) || !q.is_positive_definite() || !r.is_symmetric(1e-12) || !r.is_positive_definite() {
        return Err(DynamicsError::Dimension("Q and R must be symmetric positive definite".into()));
    }
    let rinv = r.inverse().ok_or(DynamicsError::NotStabilizable)?;
    let mut k = stabilizing_gain(model)?;
    let mut residual = f64::INFINITY;
    for _ in 0..KLEINMAN_MAX_ITER {
        let closed = a - &(b * &k);
        let rhs = (q + &(&(&k.t() * r) * &k)).scale(-1.0);
        let p = lyapunov_solve(&closed.t(), &rhs).ok_or(DynamicsError::NotStabilizable)?.symmetrize();
        k = &(&rinv * &b.t()) * &p;
        residual = care_residual(model, q, r, &p).map_or(f64::INFINITY, |m| m.frobenius());
        if residual < KLEINMAN_TOL {
            return Ok((k, p));
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(DynamicsError::NoConvergence { iterations: KLEINMAN_MAX_ITER, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{GainSwitch, SystemId};
    use std::f64::consts::PI;

    fn scalar(a: f64, b: f64) -> LinearModel {
        LinearModel { a: Mat::scalar(a), b: Mat::scalar(b) }
    }

    #[test]
    fn scalar_integrator() {
        // -P² + 1 = 0 → P = 1.
        let (k, p) = lqr_gain(&scalar(0.0, 1.0), &Mat::scalar(1.0), &Mat::scalar(1.0)).unwrap();
        assert!((p.data[0] - 1.0).abs() < 1e-9);
        assert!((k.data[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scalar_unstable() {
        // 2P - P² + 1 = 0 → P = 1 + √2.
        let (k, p) = lqr_gain(&scalar(1.0, 1.0), &Mat::scalar(1.0), &Mat::scalar(1.0)).unwrap();
        assert!((p.data[0] - (1.0 + 2f64.sqrt())).abs() < 1e-9);
        assert!((k.data[0] - 2.414_213_6).abs() < 1e-7);
    }

    #[test]
    fn gain_switch_linearisation() {
        let lm = linearize(&GainSwitch::default(), 1e-5).unwrap();
        let a = Mat::from_rows(&[&[0.0, 1.0], &[PI / 2.0, 0.0]]);
        let b = Mat::from_rows(&[&[0.0, 0.0], &[10.0, -0.1]]);
        assert!(lm.a.max_abs_diff(&a) < 1e-6, "{:?}", lm.a);
        assert!(lm.b.max_abs_diff(&b) < 1e-6, "{:?}", lm.b);
    }

    #[test]
    fn scaled_transpose_cannot_stabilise_gain_switch_but_bass_can() {
        let lm = linearize(&GainSwitch::default(), 1e-5).unwrap();
        // A - cBBᵀ has determinant -π/2 for every c.
        for c in [0.1, 1.0, 10.0] {
            assert!(!is_hurwitz(&(&lm.a - &(&lm.b * &lm.b.t().scale(c)))));
        }
        let k = stabilizing_gain(&lm).unwrap();
        assert!(is_hurwitz(&(&lm.a - &(&lm.b * &k))));
    }

    #[test]
    fn care_residual_on_builtins() {
        for id in [SystemId::GainSwitch, SystemId::BoundedInput] {
            let lm = linearize(id.build().as_ref(), 1e-5).unwrap();
            let (k, p) = lqr_gain(&lm, &Mat::identity(2), &Mat::identity(2)).unwrap();
            let res = care_residual(&lm, &Mat::identity(2), &Mat::identity(2), &p).unwrap();
            assert!(res.frobenius() < 1e-8);
            assert!(is_hurwitz(&(&lm.a - &(&lm.b * &k))));
        }
    }

    #[test]
    fn uncontrollable_unstable_mode_is_rejected() {
        let lm = LinearModel {
            a: Mat::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]),
            b: Mat::from_rows(&[&[0.0], &[1.0]]),
        };
        assert!(lqr_gain(&lm, &Mat::identity(2), &Mat::scalar(1.0)).is_err());
    }
}
