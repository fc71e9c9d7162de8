use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapforge"))
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn fit(dir: &Path, name: &str, overrides: &str) -> std::path::PathBuf {
    let cfg = dir.join(format!("{name}.cfg.json"));
    fs::write(&cfg, overrides).unwrap();
    let out = dir.join(name);
    let o = run(&["fit", "--preset", "fig4-fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn verify_accepts_a_fresh_polarnet() {
    let dir = tempfile::tempdir().unwrap();
    let out = fit(dir.path(), "pn", r#"{"steps": 0}"#);
    let o = run(&["verify", "--checkpoint", out.join("lyapunov.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["critical_points"]["points"].as_array().unwrap().len(), 1);
}

#[test]
fn verify_rejects_an_unconstrained_mlp() {
    let dir = tempfile::tempdir().unwrap();
    let out = fit(dir.path(), "mlp", r#"{"steps": 0, "lyapunov": {"arch": {"kind": "plain-mlp"}}}"#);
    let o = run(&["verify", "--checkpoint", out.join("lyapunov.json").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(&["fit", "--config", "/nonexistent/cfg.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_config_value_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"preset": "fig4-fit", "sampler": {"batch": -3}}"#).unwrap();
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sampler.batch"));
}

#[test]
fn identical_invocations_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = r#"{"steps": 30, "target": "eggcrate"}"#;
    let a = fit(dir.path(), "a", overrides);
    let b = fit(dir.path(), "b", overrides);
    for f in ["history.csv", "contour.csv", "target_contour.csv", "lyapunov.json", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let cfg = dir.path().join("s.json");
    fs::write(&cfg, r#"{"steps": 50}"#).unwrap();
    let mut outs = Vec::new();
    for name in ["s1", "s2"] {
        let out = dir.path().join(name);
        let o = run(&[
            "synth",
            "--preset",
            "fig6-synth-eq13",
            "--config",
            cfg.to_str().unwrap(),
            "--grid",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(out);
    }
    for f in ["history.csv", "trajectories.csv", "phase_portrait.csv", "contour.csv", "roa.json", "manifest.json"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn every_run_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = fit(dir.path(), "m", r#"{"steps": 2}"#);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "fit");
    assert_eq!(m["seed"], 0);
    assert!(m["config_sha256"].as_str().unwrap().len() == 64);
    assert!(m["outputs"].as_array().unwrap().iter().any(|o| o["file"] == "history.csv"));
}
