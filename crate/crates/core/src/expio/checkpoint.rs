use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Layout, Net, ParamVector};
use crate::dynamics::{BoxDomain, SystemId};
use crate::nets::{ArchSpec, Model};
use crate::verify::cell_centers;

use super::{ExpioError, TargetField};

pub const FORMAT_VERSION: u64 = 1;

/// Largest admissible `|f_s|` for a coupling scale net, probed at load.
pub const MAX_LOG_SCALE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Lyapunov,
    Controller,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub role: Role,
    pub seed: u64,
    pub steps: u64,
    #[serde(default)]
    pub final_loss: Option<f64>,
    #[serde(default)]
    pub system: Option<SystemId>,
    #[serde(default)]
    pub target: Option<TargetField>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSegment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// A versioned JSON document holding an architecture and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u64,
    pub arch: ArchSpec,
    pub segments: Vec<NamedSegment>,
    pub metadata: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(arch: ArchSpec, params: &ParamVector, metadata: CheckpointMeta) -> Self {
        let segments = params
            .layout
            .segments
            .iter()
            .map(|s| NamedSegment {
                name: s.name.clone(),
                rows: s.rows,
                cols: s.cols,
                values: params.values[s.range()].to_vec(),
            })
            .collect();
        Checkpoint { format_version: FORMAT_VERSION, arch, segments, metadata }
    }

    /// Builds the model and reassembles the flat parameter vector, checking
    /// that the segments match the architecture's layout one for one.
    pub fn to_params(&self) -> Result<(Model, ParamVector), ExpioError> {
        let model = self.arch.build().map_err(|e| ExpioError::Layout(e.to_string()))?;
        let layout: Layout = model.layout();
        if layout.segments.len() != self.segments.len() {
            return Err(ExpioError::Layout(format!(
                "architecture has {} parameter segments, checkpoint has {}",
                layout.segments.len(),
                self.segments.len()
            )));
        }
        let mut values = Vec::with_capacity(layout.total_len());
        for (want, got) in layout.segments.iter().zip(&self.segments) {
            if want.name != got.name || want.rows != got.rows || want.cols != got.cols || got.values.len() != want.len() {
                return Err(ExpioError::Layout(format!(
                    "segment `{}` ({}×{}, {} values) does not match expected `{}` ({}×{})",
                    got.name,
                    got.rows,
                    got.cols,
                    got.values.len(),
                    want.name,
                    want.rows,
                    want.cols
                )));
            }
            values.extend_from_slice(&got.values);
        }
        let params = ParamVector::new(values, layout).map_err(|e| ExpioError::Layout(e.to_string()))?;
        Ok((model, params))
    }

    fn validate(&self) -> Result<(), ExpioError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ExpioError::Version { found: self.format_version, expected: FORMAT_VERSION });
        }
        let (model, params) = self.to_params()?;
        if let Some(seg) = self.segments.iter().find(|s| s.values.iter().any(|v| !v.is_finite())) {
            return Err(ExpioError::NonFinite(format!("segment `{}`", seg.name)));
        }
        if let Some(spec) = model.as_polarnet() {
            let probe = cell_centers(&BoxDomain::symmetric(spec.dim, 1.0), probe_res(spec.dim));
            let worst = spec
                .max_abs_log_scale(&params.values, &probe)
                .map_err(|e| ExpioError::NumericFault(e.to_string()))?;
            if !(worst <= MAX_LOG_SCALE) {
                return Err(ExpioError::NumericFault(format!(
                    "coupling log-scale reaches {worst:.3} on the unit box, above the bound {MAX_LOG_SCALE}"
                )));
            }
        }
        Ok(())
    }
}

/// Probe points per axis, about 2000 in total.
fn probe_res(dim: usize) -> usize {
    ((2000f64).powf(1.0 / dim as f64).floor() as usize).max(2)
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint, ExpioError> {
    let ck: Checkpoint = serde_json::from_str(text).map_err(|e| ExpioError::Parse(e.to_string()))?;
    ck.validate()?;
    Ok(ck)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ExpioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExpioError::io(path, e))?;
    parse_checkpoint(&text)
}

/// Writes pretty-printed JSON; reals use the shortest round-trip decimal form.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), ExpioError> {
    if let Some(seg) = ck.segments.iter().find(|s| s.values.iter().any(|v| !v.is_finite())) {
        return Err(ExpioError::NonFinite(format!("segment `{}`", seg.name)));
    }
    let mut text = serde_json::to_string_pretty(ck).map_err(|e| ExpioError::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ExpioError::io(path, e))
}
