use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::ScalarField;
use crate::dynamics::{BoxDomain, DynSystem, Policy, StateBatch};
use crate::exec::map_chunks;
use crate::train::{lie_values, sample_uniform_box, TrainError};

use super::{cell_centers, norm, EXCLUSION_RADIUS};

/// Samples closer than this to the origin are skipped by the positivity scan.
pub const POSITIVITY_CUTOFF: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub value_at_origin: f64,
    pub min_off_origin: f64,
    pub argmin: Vec<f64>,
    pub samples: usize,
}

impl PositivityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.value_at_origin.abs() <= tol && self.min_off_origin > 0.0
    }
}

/// `V(0)` and the minimum of `V` over uniform samples with `‖x‖ ≥ 1e-3`.
pub fn check_positive_definite(
    field: &(impl ScalarField + ?Sized),
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
) -> Result<PositivityReport, TrainError> {
    let m = field.dim();
    if domain.dim() != m {
        return Err(TrainError::Config("box and field dimensions differ".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = sample_uniform_box(domain, samples, POSITIVITY_CUTOFF, &mut rng)?;
    let value_at_origin = field.value(&vec![0.0; m])?;
    let values = field.values(&b.data)?;
    let (i, min) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv || v.is_nan() { (i, v) } else { (bi, bv) });
    Ok(PositivityReport { value_at_origin, min_off_origin: min, argmin: b.row(i).to_vec(), samples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VdotReport {
    /// Share of scanned cells with `V̇ ≥ -margin`.
    pub violation_fraction: f64,
    pub worst_point: Vec<f64>,
    pub worst_vdot: f64,
    pub scanned: usize,
    pub margin: f64,
}

/// Scans `V̇` along the closed loop over cell centres outside `‖x‖ < 0.05`.
pub fn check_vdot_negative(
    field: &(impl ScalarField + ?Sized),
    sys: &(impl DynSystem + ?Sized),
    policy: &(impl Policy + ?Sized),
    domain: &BoxDomain,
    grid_res: usize,
    margin: f64,
) -> Result<VdotReport, TrainError> {
    if grid_res < 8 {
        return Err(TrainError::Config(format!("grid resolution {grid_res} is below 8")));
    }
    let m = domain.dim();
    let xs: Vec<f64> = cell_centers(domain, grid_res)
        .chunks_exact(m)
        .filter(|x| norm(x) >= EXCLUSION_RADIUS)
        .flatten()
        .copied()
        .collect();
    let n = xs.len() / m;
    if n == 0 {
        return Err(TrainError::Config("no grid cells outside the exclusion ball".into()));
    }
    let parts = map_chunks(n, 256, |r| {
        lie_values(field, sys, policy, &StateBatch::new(m, xs[r.start * m..r.end * m].to_vec())).map(|l| l.vdot)
    });
    let mut vdot = Vec::with_capacity(n);
    for p in parts {
        vdot.extend(p?);
    }
    let violations = vdot.iter().filter(|d| !(**d < -margin)).count();
    let (wi, worst) = vdot
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv || v.is_nan() { (i, v) } else { (bi, bv) });
    Ok(VdotReport {
        violation_fraction: violations as f64 / n as f64,
        worst_point: xs[wi * m..(wi + 1) * m].to_vec(),
        worst_vdot: worst,
        scanned: n,
        margin,
    })
}
