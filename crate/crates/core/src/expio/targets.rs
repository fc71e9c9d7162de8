use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, ScalarField, Tape, Var};

/// Closed-form scalar fields on the unit box used as fitting targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetField {
    /// `‖x‖²`, the single-minimum case.
    Bowl,
    /// `‖x‖² + sin²(πx₁) + sin²(πx₂)`.
    Eggcrate,
    /// `16((x₁-½)² + x₂²)((x₁+½)² + x₂²)`, minima at `(±½, 0)`.
    Twinwell,
    /// `(‖x‖² - ¼)²`, minimal on the circle of radius ½.
    Ring,
}

impl TargetField {
    pub const ALL: [TargetField; 4] = [TargetField::Bowl, TargetField::Eggcrate, TargetField::Twinwell, TargetField::Ring];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetField::Bowl => "bowl",
            TargetField::Eggcrate => "eggcrate",
            TargetField::Twinwell => "twinwell",
            TargetField::Ring => "ring",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        let r2 = a * a + b * b;
        match self {
            TargetField::Bowl => r2,
            TargetField::Eggcrate => r2 + (PI * a).sin().powi(2) + (PI * b).sin().powi(2),
            TargetField::Twinwell => 16.0 * ((a - 0.5).powi(2) + b * b) * ((a + 0.5).powi(2) + b * b),
            TargetField::Ring => (r2 - 0.25).powi(2),
        }
    }
}

/// Target value at a state.
pub fn target_value(field: TargetField, x: &[f64]) -> f64 {
    field.eval(x)
}

impl ScalarField for TargetField {
    fn dim(&self) -> usize {
        2
    }

    fn record(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        let r2 = tape.norm_sq_rows(x);
        Ok(match self {
            TargetField::Bowl => r2,
            TargetField::Eggcrate => {
                let px = tape.scale(x, PI);
                let s = tape.sin(px);
                let s2 = tape.norm_sq_rows(s);
                tape.add(r2, s2)
            }
            TargetField::Twinwell => {
                let (rows, _) = tape.shape(x);
                let left = tape.leaf(1, 2, &[0.5, 0.0]);
                let left = tape.broadcast_rows(left, rows);
                let p = tape.sub(x, left);
                let p = tape.norm_sq_rows(p);
                let q = tape.add(x, left);
                let q = tape.norm_sq_rows(q);
                let pq = tape.mul(p, q);
                tape.scale(pq, 16.0)
            }
            TargetField::Ring => {
                let d = tape.shift(r2, -0.25);
                tape.square(d)
            }
        })
    }

    fn values(&self, xs: &[f64]) -> Result<Vec<f64>, DiffError> {
        Ok(xs.chunks_exact(2).map(|x| self.eval(x)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        assert_eq!(target_value(TargetField::Bowl, &[0.0, 0.0]), 0.0);
        assert_eq!(target_value(TargetField::Eggcrate, &[0.0, 0.0]), 0.0);
        assert_eq!(target_value(TargetField::Twinwell, &[0.5, 0.0]), 0.0);
        assert_eq!(target_value(TargetField::Twinwell, &[0.0, 0.0]), 1.0);
        for k in 0..8 {
            let t = k as f64 * PI / 4.0;
            assert!(target_value(TargetField::Ring, &[0.5 * t.cos(), 0.5 * t.sin()]).abs() < 1e-30);
        }
    }

    #[test]
    fn tape_agrees_with_closed_form() {
        let xs = [0.3, -0.7, 0.9, 0.1, -0.45, 0.55, 0.0, 0.0];
        for f in TargetField::ALL {
            let mut t = Tape::new();
            let x = t.leaf(4, 2, &xs);
            let v = f.record(&mut t, x).unwrap();
            for (i, r) in xs.chunks_exact(2).enumerate() {
                assert!((t.value(v)[i] - f.eval(r)).abs() < 1e-14, "{f:?}");
            }
        }
    }
}
