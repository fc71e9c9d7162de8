use serde::{Deserialize, Serialize};

use super::{DynSystem, DynamicsError, Policy};

/// One classical Runge–Kutta step.
pub fn rk4_step(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], dt: f64) -> Result<Vec<f64>, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    let k1 = f(x);
    let k2 = f(&axpy(0.5 * dt, &k1));
    let k3 = f(&axpy(0.5 * dt, &k2));
    let k4 = f(&axpy(dt, &k3));
    let out: Vec<f64> = (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(DynamicsError::NumericFault("rk4 step produced a non-finite state".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    Escaped,
    TimedOut,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::Escaped => "escaped",
            Termination::TimedOut => "timed-out",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub conv_tol: f64,
    /// Model time the state must stay inside the tolerance ball.
    pub hold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 0.01, t_max: 20.0, conv_tol: 1e-3, hold: 1.0 }
    }
}

impl SimConfig {
    pub fn with_tol(conv_tol: f64) -> Self {
        SimConfig { conv_tol, ..SimConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Input applied at the start of each step; one shorter than `states`.
    pub inputs: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least its initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Closed-loop rollout with RK4. Stops when the state leaves the domain
/// (or becomes non-finite), when it has stayed within `conv_tol` of the
/// origin for `hold` seconds, or at `t_max`.
pub fn simulate(
    sys: &(impl DynSystem + ?Sized),
    policy: &(impl Policy + ?Sized),
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<Trajectory, DynamicsError> {
    if x0.len() != sys.state_dim() || policy.input_dim() != sys.state_dim() || policy.output_dim() != sys.input_dim() {
        return Err(DynamicsError::Dimension("policy, system and initial state disagree".into()));
    }
    if !(cfg.dt > 0.0) || !(cfg.t_max >= 0.0) {
        return Err(DynamicsError::InvalidStep(cfg.dt));
    }
    if !sys.domain().contains(x0) {
        return Err(DynamicsError::OutsideDomain(x0.to_vec()));
    }
    let steps = (cfg.t_max / cfg.dt).round() as usize;
    let hold_steps = (cfg.hold / cfg.dt).round() as usize;
    let closed = |x: &[f64]| sys.rhs(x, &policy.act(x));

    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut inputs = Vec::new();
    let mut inside_since = (norm(x0) < cfg.conv_tol).then_some(0usize);
    let mut x = x0.to_vec();
    let mut termination = Termination::TimedOut;

    for k in 1..=steps {
        inputs.push(policy.act(&x));
        let next = rk4_step(closed, &x, cfg.dt);
        times.push(k as f64 * cfg.dt);
        match next {
            Ok(n) if sys.domain().contains(&n) => x = n,
            Ok(n) => {
                states.push(n);
                termination = Termination::Escaped;
                break;
            }
            Err(_) => {
                states.push(vec![f64::NAN; x.len()]);
                termination = Termination::Escaped;
                break;
            }
        }
        states.push(x.clone());
        if norm(&x) < cfg.conv_tol {
            let since = *inside_since.get_or_insert(k);
            if k - since >= hold_steps {
                termination = Termination::Converged;
                break;
            }
        } else {
            inside_since = None;
        }
    }
    Ok(Trajectory { times, states, inputs, termination })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{BoxDomain, LinearSystem, Mat, ZeroPolicy};

    fn scalar_growth(x: f64, dt: f64) -> f64 {
        // Hand-expanded RK4 stages for ẋ = x.
        let k1 = x;
        let k2 = x + 0.5 * dt * k1;
        let k3 = x + 0.5 * dt * k2;
        let k4 = x + dt * k3;
        x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    #[test]
    fn zero_field_leaves_state() {
        let y = rk4_step(|x| vec![0.0; x.len()], &[0.3, -1.0], 0.1).unwrap();
        assert_eq!(y, vec![0.3, -1.0]);
    }

    #[test]
    fn exponential_step() {
        let y = rk4_step(|x| x.to_vec(), &[1.0], 0.1).unwrap();
        assert_eq!(y[0], scalar_growth(1.0, 0.1));
        assert!((y[0] - 1.105_170_833_333_333).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(rk4_step(|x| x.to_vec(), &[1.0], 0.0).is_err());
    }

    fn zero_policy() -> ZeroPolicy {
        ZeroPolicy { state_dim: 2, input_dim: 1 }
    }

    #[test]
    fn contracting_loop_converges() {
        let sys = LinearSystem::autonomous(Mat::identity(2).scale(-1.0), BoxDomain::symmetric(2, 1.0)).unwrap();
        let tr = simulate(&sys, &zero_policy(), &[0.5, 0.5], &SimConfig::default()).unwrap();
        assert_eq!(tr.termination, Termination::Converged);
        let t = tr.final_time();
        // Enters the 1e-3 ball at ln(707.1) ≈ 6.56 s, then holds for 1 s.
        assert!((t - (0.5f64.hypot(0.5) / 1e-3).ln() - 1.0).abs() < 0.02, "{t}");
        let expect = 0.5f64.hypot(0.5) * (-t).exp();
        assert!((norm(tr.last_state()) - expect).abs() < 1e-9);
        assert_eq!(tr.inputs.len(), tr.states.len() - 1);
    }

    #[test]
    fn expanding_loop_escapes() {
        let sys = LinearSystem::autonomous(Mat::identity(2), BoxDomain::symmetric(2, 1.0)).unwrap();
        let tr = simulate(&sys, &zero_policy(), &[0.9, 0.0], &SimConfig::default()).unwrap();
        assert_eq!(tr.termination, Termination::Escaped);
        assert!((tr.final_time() - (1.0f64 / 0.9).ln()).abs() <= 0.01);
        assert!(tr.last_state()[0] >= 1.0);
        assert!(tr.states[..tr.len() - 1].iter().all(|s| s[0] < 1.0));
    }

    #[test]
    fn still_field_times_out() {
        let sys = LinearSystem::autonomous(Mat::zeros(2, 2), BoxDomain::symmetric(2, 1.0)).unwrap();
        let tr = simulate(&sys, &zero_policy(), &[0.2, 0.0], &SimConfig::default()).unwrap();
        assert_eq!(tr.termination, Termination::TimedOut);
        assert!((tr.final_time() - 20.0).abs() < 1e-9);
        assert_eq!(tr.len(), 2001);
    }

    #[test]
    fn times_are_step_multiples() {
        let sys = LinearSystem::autonomous(Mat::zeros(2, 2), BoxDomain::symmetric(2, 1.0)).unwrap();
        let cfg = SimConfig { t_max: 1.0, ..SimConfig::default() };
        let tr = simulate(&sys, &zero_policy(), &[0.2, 0.0], &cfg).unwrap();
        for (k, t) in tr.times.iter().enumerate() {
            assert_eq!(*t, k as f64 * 0.01);
        }
    }
}
