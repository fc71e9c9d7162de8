use serde::{Deserialize, Serialize};

use crate::diffcore::Net;
use crate::dynamics::{BoxDomain, DynSystem, SystemId};
use crate::expio::TargetField;
use crate::nets::ArchSpec;

use super::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Fit,
    Synthesize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub arch: ArchSpec,
    pub optimizer: AdamConfig,
}

fn unit_box() -> BoxDomain {
    BoxDomain::symmetric(2, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(rename = "box", default = "unit_box")]
    pub domain: BoxDomain,
    pub batch: i64,
    #[serde(default)]
    pub cutoff_radius: f64,
}

/// Pre-training of the controller to imitate an LQR law `u = -Kx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmStartConfig {
    pub steps: i64,
    pub lr: f64,
}

fn snapshot_grid() -> i64 {
    21
}
fn holdout() -> i64 {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub steps: i64,
    pub lyapunov: NetConfig,
    #[serde(default)]
    pub controller: Option<NetConfig>,
    #[serde(default)]
    pub system: Option<SystemId>,
    #[serde(default)]
    pub target: Option<TargetField>,
    pub sampler: SamplerConfig,
    /// Margin `ε` in the hinge `max(0, V̇ + ε)`.
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub lqr_warm_start: Option<WarmStartConfig>,
    /// Record a snapshot every this many steps; 0 disables snapshots.
    #[serde(default)]
    pub snapshot_every: i64,
    /// Seed grid for the critical-point count in snapshots.
    #[serde(default = "snapshot_grid")]
    pub snapshot_grid: i64,
    /// Held-out samples for the final fit error.
    #[serde(default = "holdout")]
    pub holdout: i64,
}

/// A configuration problem located by its key path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigIssue {
    Missing { path: String },
    Range { path: String, message: String },
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigIssue::Missing { path } => write!(f, "missing required key `{path}`"),
            ConfigIssue::Range { path, message } => write!(f, "`{path}` out of range: {message}"),
        }
    }
}

fn range(path: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue::Range { path: path.into(), message: message.into() }
}

fn check_optimizer(prefix: &str, o: &AdamConfig) -> Result<(), ConfigIssue> {
    if !(o.lr > 0.0 && o.lr.is_finite()) {
        return Err(range(&format!("{prefix}.optimizer.lr"), "must be positive"));
    }
    if o.warmup < 0 {
        return Err(range(&format!("{prefix}.optimizer.warmup"), "must be non-negative"));
    }
    if !(o.weight_decay >= 0.0) {
        return Err(range(&format!("{prefix}.optimizer.weight_decay"), "must be non-negative"));
    }
    if !(0.0..1.0).contains(&o.beta1) {
        return Err(range(&format!("{prefix}.optimizer.beta1"), "must lie in [0, 1)"));
    }
    if !(0.0..1.0).contains(&o.beta2) {
        return Err(range(&format!("{prefix}.optimizer.beta2"), "must lie in [0, 1)"));
    }
    if !(o.eps > 0.0) {
        return Err(range(&format!("{prefix}.optimizer.eps"), "must be positive"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigIssue> {
        if self.steps < 0 {
            return Err(range("steps", "must be non-negative"));
        }
        let s = &self.sampler;
        if s.batch < 1 {
            return Err(range("sampler.batch", "must be at least 1"));
        }
        if s.domain.lo.len() != s.domain.hi.len()
            || s.domain.lo.is_empty()
            || s.domain.lo.iter().zip(&s.domain.hi).any(|(a, b)| !(a < b))
        {
            return Err(range("sampler.box", "needs lo < hi in every coordinate"));
        }
        if !(s.cutoff_radius >= 0.0 && s.cutoff_radius < s.domain.min_half_width()) {
            return Err(range("sampler.cutoff_radius", "must be in [0, smallest half-width)"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(range("margin", "must be non-negative"));
        }
        if self.snapshot_every < 0 {
            return Err(range("snapshot_every", "must be non-negative"));
        }
        if self.snapshot_grid < 8 {
            return Err(range("snapshot_grid", "must be at least 8"));
        }
        if self.holdout < 1 {
            return Err(range("holdout", "must be at least 1"));
        }
        check_optimizer("lyapunov", &self.lyapunov.optimizer)?;
        let v = self.lyapunov.arch.build().map_err(|e| range("lyapunov.arch", e.to_string()))?;
        if v.output_dim() != 1 {
            return Err(range("lyapunov.arch", "must have a scalar output"));
        }
        let dim = s.domain.dim();
        match self.mode {
            Mode::Fit => {
                if self.target.is_none() {
                    return Err(ConfigIssue::Missing { path: "target".into() });
                }
                if dim != 2 || v.input_dim() != 2 {
                    return Err(range("lyapunov.arch", "target fields are two-dimensional"));
                }
            }
            Mode::Synthesize => {
                let Some(id) = self.system else {
                    return Err(ConfigIssue::Missing { path: "system".into() });
                };
                let Some(c) = &self.controller else {
                    return Err(ConfigIssue::Missing { path: "controller".into() });
                };
                check_optimizer("controller", &c.optimizer)?;
                let sys = id.build();
                let u = c.arch.build().map_err(|e| range("controller.arch", e.to_string()))?;
                if v.input_dim() != sys.state_dim() {
                    return Err(range("lyapunov.arch", "input width differs from the system state"));
                }
                if u.input_dim() != sys.state_dim() || u.output_dim() != sys.input_dim() {
                    return Err(range("controller.arch", "widths do not match the system"));
                }
                if dim != sys.state_dim() {
                    return Err(range("sampler.box", "dimension differs from the system state"));
                }
                if let Some(w) = &self.lqr_warm_start {
                    if w.steps < 0 {
                        return Err(range("lqr_warm_start.steps", "must be non-negative"));
                    }
                    if !(w.lr > 0.0) {
                        return Err(range("lqr_warm_start.lr", "must be positive"));
                    }
                }
            }
        }
        Ok(())
    }
}
