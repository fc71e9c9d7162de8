// Shared oracles and config builders for the integration tests.
#![allow(dead_code)]

use lyapforge::expio::parse_config;
use lyapforge::train::ExperimentConfig;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central differences, written out here so the tests do not lean on the
/// library's own helper.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let a = f(&p);
            p[i] = x[i] - h;
            let b = f(&p);
            p[i] = x[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(a).max(norm(b)).max(floor)
}

pub fn uniform(rng: &mut impl Rng, n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-half..half)).collect()
}

/// Smallest root of `f` in `[a, b]` by bisection; `f(a)` and `f(b)` must differ in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    assert!(fa * f(b) < 0.0, "no sign change on [{a}, {b}]");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

pub fn fit_config(target: &str, arch: &str, lr: f64, seed: u64, steps: u64) -> ExperimentConfig {
    parse_config(&format!(
        r#"{{"preset": "fig4-fit", "target": "{target}", "seed": {seed}, "steps": {steps},
            "lyapunov": {{"arch": {{"kind": "{arch}", "dim": 2}}, "optimizer": {{"lr": {lr}}}}}}}"#
    ))
    .expect("fit config")
}

pub fn synth_config(preset: &str, arch: &str, lr_v: f64, lr_u: f64, seed: u64, steps: u64) -> ExperimentConfig {
    parse_config(&format!(
        r#"{{"preset": "{preset}", "seed": {seed}, "steps": {steps},
            "lyapunov": {{"arch": {{"kind": "{arch}", "dim": 2}}, "optimizer": {{"lr": {lr_v}}}}},
            "controller": {{"optimizer": {{"lr": {lr_u}}}}}}}"#
    ))
    .expect("synthesis config")
}
