//! Numerical checks of the Lyapunov conditions and closed-loop behaviour.

mod checks;
mod critical;
mod roa;

pub use checks::{check_positive_definite, check_vdot_negative, PositivityReport, VdotReport};
pub use critical::{
    find_critical_points, grid_min_gradnorm, value_grad_hessian, CriticalPoint, CriticalPointConfig, CriticalPointReport,
};
pub use roa::{circle_states, classify_trajectory, roa_estimate, roa_grid, RoaEstimate};

use crate::dynamics::BoxDomain;

/// Ball around the origin left out of off-origin scans.
pub const EXCLUSION_RADIUS: f64 = 0.05;

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Centres of a `res^m` cell grid over the box, first coordinate fastest.
pub fn cell_centers(domain: &BoxDomain, res: usize) -> Vec<f64> {
    let m = domain.dim();
    let total = res.pow(m as u32);
    let mut out = Vec::with_capacity(total * m);
    for idx in 0..total {
        let mut rest = idx;
        for k in 0..m {
            let i = rest % res;
            rest /= res;
            let w = (domain.hi[k] - domain.lo[k]) / res as f64;
            out.push(domain.lo[k] + (i as f64 + 0.5) * w);
        }
    }
    out
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_centres_are_ordered_and_interior() {
        let c = cell_centers(&BoxDomain::symmetric(2, 1.0), 2);
        assert_eq!(c, vec![-0.5, -0.5, 0.5, -0.5, -0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn linspace_hits_endpoints() {
        assert_eq!(linspace(-1.0, 1.0, 3), vec![-1.0, 0.0, 1.0]);
        assert_eq!(linspace(0.0, 1.0, 1), vec![0.5]);
    }
}
