use std::path::Path;

use serde_json::{json, Value};

use crate::train::{ConfigIssue, ExperimentConfig};

use super::ExpioError;

pub const PRESET_NAMES: [&str; 3] = ["fig4-fit", "fig5-synth-eq9", "fig6-synth-eq13"];

fn unit_box() -> Value {
    json!({ "lo": [-1.0, -1.0], "hi": [1.0, 1.0] })
}

fn polarnet() -> Value {
    json!({ "kind": "polarnet", "dim": 2, "layers": 4, "hidden": [12, 12] })
}

fn controller(outputs: usize) -> Value {
    json!({ "kind": "mlp", "widths": [2, 32, 32, outputs], "bias": false })
}

/// A named starting configuration, as JSON so that user files can override
/// individual keys.
pub fn preset(name: &str) -> Result<Value, ExpioError> {
    Ok(match name {
        "fig4-fit" => json!({
            "mode": "fit",
            "seed": 0,
            "steps": 2000,
            "target": "bowl",
            "lyapunov": {
                "arch": polarnet(),
                "optimizer": { "lr": 5e-3, "warmup": 400 }
            },
            "sampler": { "box": unit_box(), "batch": 1024, "cutoff_radius": 0.0 }
        }),
        "fig5-synth-eq9" => json!({
            "mode": "synthesize",
            "seed": 0,
            "steps": 20000,
            "system": "gain-switch",
            "lyapunov": {
                "arch": polarnet(),
                "optimizer": { "lr": 5e-6 }
            },
            "controller": {
                "arch": controller(2),
                "optimizer": { "lr": 5e-6 }
            },
            "sampler": { "box": unit_box(), "batch": 32, "cutoff_radius": 0.1 },
            "margin": 0.01,
            "lqr_warm_start": { "steps": 500, "lr": 1e-2 }
        }),
        "fig6-synth-eq13" => json!({
            "mode": "synthesize",
            "seed": 0,
            "steps": 20000,
            "system": "bounded-input",
            "lyapunov": {
                "arch": polarnet(),
                "optimizer": { "lr": 5e-4, "weight_decay": 1e-5 }
            },
            "controller": {
                "arch": controller(2),
                "optimizer": { "lr": 2e-3, "weight_decay": 1e-5 }
            },
            "sampler": { "box": unit_box(), "batch": 100, "cutoff_radius": 0.1 },
            "margin": 0.01
        }),
        other => return Err(ExpioError::UnknownPreset(other.to_string())),
    })
}

/// Recursive object merge; `top` wins. Objects that name different `kind`s
/// are replaced wholesale so that switching architecture drops stale keys.
fn merge(base: Value, top: Value) -> Value {
    match (base, top) {
        (Value::Object(mut b), Value::Object(t)) => {
            let switched = matches!((b.get("kind"), t.get("kind")), (Some(x), Some(y)) if x != y);
            if switched {
                return Value::Object(t);
            }
            for (k, v) in t {
                let merged = match b.remove(&k) {
                    Some(old) => merge(old, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            Value::Object(b)
        }
        (_, t) => t,
    }
}

fn backticked(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() || prefix == "." {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn map_issue(issue: ConfigIssue) -> ExpioError {
    match issue {
        ConfigIssue::Missing { path } => ExpioError::MissingKey { path },
        ConfigIssue::Range { path, message } => ExpioError::Range { path, message },
    }
}

/// Parses a JSON config. A top-level `"preset"` key names a starting point
/// that the remaining keys override.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ExpioError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| ExpioError::Parse(e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        if let Some(p) = obj.remove("preset") {
            let name = p.as_str().ok_or_else(|| ExpioError::Range {
                path: "preset".into(),
                message: "must be a preset name".into(),
            })?;
            value = merge(preset(name)?, value);
        }
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.inner().to_string();
        if msg.starts_with("missing field") {
            ExpioError::MissingKey { path: join(&path, backticked(&msg).unwrap_or("?")) }
        } else if msg.starts_with("unknown field") {
            // The tracked path already ends at the offending key.
            let key = backticked(&msg).unwrap_or("?");
            let path = if path == key || path.ends_with(&format!(".{key}")) { path } else { join(&path, key) };
            ExpioError::UnknownKey { path }
        } else {
            ExpioError::Parse(format!("{path}: {msg}"))
        }
    })?;
    cfg.validate().map_err(map_issue)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ExpioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExpioError::io(path, e))?;
    parse_config(&text)
}
