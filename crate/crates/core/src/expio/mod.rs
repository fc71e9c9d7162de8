//! Configs, checkpoints, target fields and CSV/JSON exports.

mod checkpoint;
mod config;
mod export;
mod targets;

pub use checkpoint::{
    load_checkpoint, parse_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, NamedSegment, Role, FORMAT_VERSION,
    MAX_LOG_SCALE,
};
pub use config::{load_config, parse_config, preset, PRESET_NAMES};
pub use export::{
    export_contour_grid, export_history, export_phase_portrait, export_trajectories, write_json, FLOAT_FORMAT_DIGITS,
};
pub use targets::{target_value, TargetField};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("layout mismatch: {0}")]
    Layout(String),
    #[error("missing required key `{path}`")]
    MissingKey { path: String },
    #[error("unknown key `{path}`")]
    UnknownKey { path: String },
    #[error("`{path}` out of range: {message}")]
    Range { path: String, message: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("numeric fault: {0}")]
    NumericFault(String),
}

impl ExpioError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ExpioError::Io { path: path.display().to_string(), source }
    }
}
