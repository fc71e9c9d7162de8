mod common;

use std::fs;

use common::rng;
use lyapforge::dynamics::{BoxDomain, LinearSystem, Mat, Termination, Trajectory, ZeroPolicy};
use lyapforge::expio::{
    export_contour_grid, export_history, export_phase_portrait, export_trajectories, load_checkpoint, load_config,
    save_checkpoint, Checkpoint, CheckpointMeta, ExpioError, Role, TargetField,
};
use lyapforge::nets::{init_params, ArchSpec};
use lyapforge::train::{Snapshot, TrainingHistory};
use rand::Rng;

fn rows(path: &std::path::Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn contour_grid_rows_and_corner() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let unit = BoxDomain::symmetric(2, 1.0);
    assert_eq!(export_contour_grid(&TargetField::Bowl, &unit, 3, &path).unwrap(), 9);
    let r = rows(&path);
    assert_eq!(r[0], ["x1", "x2", "v"]);
    assert_eq!(r.len(), 10);
    let first: Vec<f64> = r[1].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(first, [-1.0, -1.0, 2.0]);
    // x1 varies fastest.
    assert_eq!(r[2][1].parse::<f64>().unwrap(), -1.0);

    assert_eq!(export_contour_grid(&TargetField::Bowl, &unit, 2, &path).unwrap(), 4);
    assert_eq!(rows(&path).len(), 5);
}

#[test]
fn exports_are_byte_identical_on_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let model = ArchSpec::polarnet(2).build().unwrap();
    let p = init_params(&model, 1);
    let field = lyapforge::diffcore::BoundNet::new(&model, &p);
    let unit = BoxDomain::symmetric(2, 1.0);
    export_contour_grid(&field, &unit, 25, &a).unwrap();
    export_contour_grid(&field, &unit, 25, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn trajectory_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let tr = Trajectory {
        times: vec![0.0, 0.01, 0.02],
        states: vec![vec![0.5, 0.5], vec![0.49, 0.49], vec![0.48, 0.48]],
        inputs: vec![vec![0.0], vec![0.0]],
        termination: Termination::TimedOut,
    };
    assert_eq!(export_trajectories(&[tr], &path).unwrap(), 3);
    let r = rows(&path);
    assert_eq!(r[0], ["traj_id", "t", "x1", "x2", "termination"]);
    assert!(r[1..].iter().all(|row| row[0] == "0" && row[4] == "timed-out"));

    assert_eq!(export_trajectories(&[], &path).unwrap(), 0);
    assert_eq!(rows(&path).len(), 1);
}

#[test]
fn phase_portrait_of_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let half = BoxDomain::symmetric(2, 0.5);
    let sys = LinearSystem::autonomous(Mat::from_rows(&[&[-1.0, 0.0], &[0.0, -1.0]]), half.clone()).unwrap();
    let policy = ZeroPolicy { state_dim: 2, input_dim: 1 };
    assert_eq!(export_phase_portrait(&sys, &policy, &half, 3, &path).unwrap(), 9);
    let r = rows(&path);
    let row: Vec<f64> = r
        .iter()
        .skip(1)
        .map(|row| row.iter().map(|s| s.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .find(|v| v[0] == 0.5 && v[1] == 0.0)
        .unwrap();
    assert_eq!(row, [0.5, 0.0, -0.5, 0.0]);
}

#[test]
fn history_leaves_unsampled_steps_blank() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    let h = TrainingHistory {
        losses: vec![3.0, 2.0, 1.0],
        snapshots: vec![Snapshot { step: 2, loss: 2.0, violation_fraction: Some(0.25), critical_points: Some(1) }],
    };
    export_history(&h, &path).unwrap();
    let r = rows(&path);
    assert_eq!(r[1][2..], ["", ""]);
    assert_eq!(r[2][3], "1");
    assert_eq!(r[2][2].parse::<f64>().unwrap(), 0.25);
}

#[test]
fn checkpoints_round_trip_bit_exact_for_every_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let archs = [
        ArchSpec::polarnet(2),
        ArchSpec::plain_mlp(2),
        ArchSpec::lyapunov_net(2),
        ArchSpec::wei(2),
        ArchSpec::controller(2, 2),
    ];
    let mut r = rng(77);
    for arch in archs {
        let model = arch.build().unwrap();
        for i in 0..100u64 {
            let mut p = init_params(&model, i);
            for v in &mut p.values {
                *v *= r.gen_range(0.5..2.0);
            }
            let meta = CheckpointMeta {
                role: if arch.kind() == "mlp" { Role::Controller } else { Role::Lyapunov },
                seed: i,
                steps: 0,
                final_loss: Some(r.gen::<f64>()),
                system: None,
                target: None,
            };
            save_checkpoint(&path, &Checkpoint::new(arch.clone(), &p, meta.clone())).unwrap();
            let back = load_checkpoint(&path).unwrap();
            let (_, q) = back.to_params().unwrap();
            assert!(p.values.iter().zip(&q.values).all(|(a, b)| a.to_bits() == b.to_bits()), "{} #{i}", arch.kind());
            assert_eq!(back.metadata, meta);
        }
    }
}

#[test]
fn broken_checkpoint_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let arch = ArchSpec::polarnet(2);
    let p = init_params(&arch.build().unwrap(), 0);
    let meta = CheckpointMeta { role: Role::Lyapunov, seed: 0, steps: 0, final_loss: None, system: None, target: None };
    save_checkpoint(&path, &Checkpoint::new(arch, &p, meta)).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, &text[..text.len() - 20]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(ExpioError::Parse(_))));
    assert!(matches!(load_checkpoint(&dir.path().join("absent.json")), Err(ExpioError::Io { .. })));
}

#[test]
fn config_files_report_key_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"preset": "fig4-fit", "sampler": {"batch": -1}}"#).unwrap();
    assert!(matches!(load_config(&path), Err(ExpioError::Range { path, .. }) if path == "sampler.batch"));
    fs::write(&path, r#"{"preset": "fig6-synth-eq13", "margn": 0.1}"#).unwrap();
    assert!(matches!(load_config(&path), Err(ExpioError::UnknownKey { path }) if path == "margn"));
    fs::write(&path, r#"{"preset": "fig5-synth-eq9"}"#).unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.sampler.batch, 32);
    assert_eq!(cfg.lyapunov.optimizer.lr, 5e-6);
}
