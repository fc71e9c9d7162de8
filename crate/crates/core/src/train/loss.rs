use crate::diffcore::{ScalarField, Tape, Var};
use crate::dynamics::{DynSystem, Policy, StateBatch};

use super::TrainError;

/// Values and Lie derivatives of `V` along the closed loop on a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LieValues {
    pub v: Vec<f64>,
    pub vdot: Vec<f64>,
}

/// Records `V` (B×1) and `V̇ = ⟨∇V, f(x, u)⟩` (B×1) with `u` already recorded.
pub(crate) fn record_lie(
    tape: &mut Tape,
    v: Var,
    x: Var,
    u: Var,
    sys: &(impl DynSystem + ?Sized),
) -> Result<Var, TrainError> {
    let g = tape.grad(v, &[x])[0];
    let f = sys.record_rhs(tape, x, u)?;
    Ok(tape.dot_rows(g, f))
}

fn check_dims(
    field: &(impl ScalarField + ?Sized),
    sys: &(impl DynSystem + ?Sized),
    policy: &(impl Policy + ?Sized),
    dim: usize,
) -> Result<(), TrainError> {
    let m = sys.state_dim();
    if field.dim() != m || policy.input_dim() != m || policy.output_dim() != sys.input_dim() || dim != m {
        return Err(TrainError::Config("field, system, policy and states disagree on dimensions".into()));
    }
    Ok(())
}

pub fn lie_values(
    field: &(impl ScalarField + ?Sized),
    sys: &(impl DynSystem + ?Sized),
    policy: &(impl Policy + ?Sized),
    batch: &StateBatch,
) -> Result<LieValues, TrainError> {
    check_dims(field, sys, policy, batch.dim)?;
    let mut tape = Tape::new();
    let x = tape.leaf(batch.len(), batch.dim, &batch.data);
    let v = field.record(&mut tape, x)?;
    let u = policy.record(&mut tape, x)?;
    let vd = record_lie(&mut tape, v, x, u, sys)?;
    tape.ensure_finite(vd, || "Lie derivative".into())?;
    Ok(LieValues { v: tape.value(v).to_vec(), vdot: tape.value(vd).to_vec() })
}

/// `V̇(x)` at a single state.
pub fn vdot(
    field: &(impl ScalarField + ?Sized),
    sys: &(impl DynSystem + ?Sized),
    policy: &(impl Policy + ?Sized),
    x: &[f64],
) -> Result<f64, TrainError> {
    Ok(lie_values(field, sys, policy, &StateBatch::new(x.len(), x.to_vec()))?.vdot[0])
}

fn nonempty(batch: &StateBatch) -> Result<(), TrainError> {
    if batch.is_empty() {
        Err(TrainError::Config("empty batch".into()))
    } else {
        Ok(())
    }
}

/// Mean of `max(0, -V) + max(0, V̇)` plus `V(0)²`.
pub fn risk_canonical(
    field: &(impl ScalarField + ?Sized),
    sys: &(impl DynSystem + ?Sized),
    policy: &(impl Policy + ?Sized),
    batch: &StateBatch,
) -> Result<f64, TrainError> {
    nonempty(batch)?;
    let lv = lie_values(field, sys, policy, batch)?;
    let v0 = field.value(&vec![0.0; batch.dim])?;
    let n = batch.len() as f64;
    let hinge: f64 = lv.v.iter().zip(&lv.vdot).map(|(v, d)| (-v).max(0.0) + d.max(0.0)).sum();
    Ok(hinge / n + v0 * v0)
}

/// Mean of `max(0, V̇ + margin)`.
pub fn risk_reduced(
    field: &(impl ScalarField + ?Sized),
    sys: &(impl DynSystem + ?Sized),
    policy: &(impl Policy + ?Sized),
    batch: &StateBatch,
    margin: f64,
) -> Result<f64, TrainError> {
    nonempty(batch)?;
    let lv = lie_values(field, sys, policy, batch)?;
    Ok(lv.vdot.iter().map(|d| (d + margin).max(0.0)).sum::<f64>() / batch.len() as f64)
}

/// Mean squared difference between two fields on a batch.
pub fn mse_loss(
    field: &(impl ScalarField + ?Sized),
    target: &(impl ScalarField + ?Sized),
    batch: &StateBatch,
) -> Result<f64, TrainError> {
    nonempty(batch)?;
    let a = field.values(&batch.data)?;
    let b = target.values(&batch.data)?;
    Ok(mse(&a, &b))
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::DiffError;
    use crate::dynamics::{BoxDomain, LinearSystem, Mat, ZeroPolicy};
    use crate::expio::TargetField;

    fn zero() -> ZeroPolicy {
        ZeroPolicy { state_dim: 2, input_dim: 1 }
    }

    fn linear(rows: &[&[f64]]) -> LinearSystem {
        LinearSystem::autonomous(Mat::from_rows(rows), BoxDomain::symmetric(2, 2.0)).unwrap()
    }

    /// `V(x) = c·x₁`.
    struct Slope(f64);

    impl ScalarField for Slope {
        fn dim(&self) -> usize {
            2
        }
        fn record(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
            let x1 = tape.slice_cols(x, 0, 1);
            Ok(tape.scale(x1, self.0))
        }
    }

    #[test]
    fn vdot_of_contracting_loop() {
        let sys = linear(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        assert_eq!(vdot(&TargetField::Bowl, &sys, &zero(), &[1.0, 1.0]).unwrap(), -4.0);
    }

    #[test]
    fn vdot_of_rotation_is_zero() {
        let sys = linear(&[&[0.0, -1.0], &[1.0, 0.0]]);
        for x in [[0.3, 0.4], [-1.0, 0.2], [0.0, 0.7]] {
            assert_eq!(vdot(&TargetField::Bowl, &sys, &zero(), &x).unwrap(), 0.0);
        }
    }

    #[test]
    fn canonical_risk_cases() {
        let contracting = linear(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        let b = StateBatch::new(2, vec![0.3, 0.4, -0.5, 0.1]);
        assert_eq!(risk_canonical(&TargetField::Bowl, &contracting, &zero(), &b).unwrap(), 0.0);

        let one = StateBatch::new(2, vec![1.0, 0.0]);
        // V = -0.2, V̇ = -0.2·5 = -1.
        let push = linear(&[&[5.0, 0.0], &[0.0, 0.0]]);
        assert!((risk_canonical(&Slope(-0.2), &push, &zero(), &one).unwrap() - 0.2).abs() < 1e-16);
        // V = 1, V̇ = 0.5.
        let slow = linear(&[&[0.5, 0.0], &[0.0, 0.0]]);
        assert_eq!(risk_canonical(&Slope(1.0), &slow, &zero(), &one).unwrap(), 0.5);
    }

    #[test]
    fn reduced_risk_cases() {
        let one = StateBatch::new(2, vec![1.0, 0.0]);
        let slow = linear(&[&[0.5, 0.0], &[0.0, 0.0]]);
        assert_eq!(risk_reduced(&Slope(1.0), &slow, &zero(), &one, 0.0).unwrap(), 0.5);
        let gentle = linear(&[&[-0.05, 0.0], &[0.0, 0.0]]);
        assert!((risk_reduced(&Slope(1.0), &gentle, &zero(), &one, 0.1).unwrap() - 0.05).abs() < 1e-16);
        let fast = linear(&[&[-3.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(risk_reduced(&Slope(1.0), &fast, &zero(), &one, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[0.0, 0.0]), 2.5);
        let b = StateBatch::new(2, vec![0.3, 0.4, -0.5, 0.1]);
        assert_eq!(mse_loss(&TargetField::Bowl, &TargetField::Bowl, &b).unwrap(), 0.0);
    }
}
