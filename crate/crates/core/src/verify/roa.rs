use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, DynSystem, DynamicsError, Policy, SimConfig, Termination, Trajectory};
use crate::exec::map_indexed;

use super::{linspace, norm};

/// Re-derives the outcome of a rollout.
///
/// A trajectory recorded as converged whose last state is not inside
/// `conv_tol` is reported as timed out; a non-finite last state always counts
/// as an escape.
pub fn classify_trajectory(traj: &Trajectory, conv_tol: f64) -> Result<Termination, DynamicsError> {
    let last = traj.states.last().ok_or_else(|| DynamicsError::Dimension("empty trajectory".into()))?;
    if last.iter().any(|v| !v.is_finite()) {
        return Ok(Termination::Escaped);
    }
    Ok(match traj.termination {
        Termination::Converged if norm(last) >= conv_tol => Termination::TimedOut,
        t => t,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoaEstimate {
    pub initial_states: Vec<Vec<f64>>,
    pub classes: Vec<Termination>,
    pub converged_fraction: f64,
}

impl RoaEstimate {
    pub fn count(&self, t: Termination) -> usize {
        self.classes.iter().filter(|c| **c == t).count()
    }
}

/// `n × n` grid with inclusive endpoints over `[lo, hi]²`, origin removed.
pub fn roa_grid(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    let axis = linspace(lo, hi, n);
    let mut out = Vec::with_capacity(n * n);
    for &b in &axis {
        for &a in &axis {
            if a != 0.0 || b != 0.0 {
                out.push(vec![a, b]);
            }
        }
    }
    out
}

/// `count` states evenly spaced on the circle of `radius`, starting on the
/// positive first axis.
pub fn circle_states(radius: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / count as f64;
            vec![radius * t.cos(), radius * t.sin()]
        })
        .collect()
}

/// Simulates every initial state and reports the converged share.
pub fn roa_estimate(
    sys: &(impl DynSystem + ?Sized),
    policy: &(impl Policy + ?Sized),
    initial_states: &[Vec<f64>],
    sim: &SimConfig,
) -> Result<RoaEstimate, DynamicsError> {
    if initial_states.is_empty() {
        return Err(DynamicsError::Dimension("no initial states".into()));
    }
    let runs = map_indexed(initial_states.len(), |i| {
        simulate(sys, policy, &initial_states[i], sim).and_then(|t| classify_trajectory(&t, sim.conv_tol))
    });
    let classes = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let converged = classes.iter().filter(|c| **c == Termination::Converged).count();
    Ok(RoaEstimate {
        initial_states: initial_states.to_vec(),
        converged_fraction: converged as f64 / classes.len() as f64,
        classes,
    })
}
