// Parallel vs sequential on the three hot loops. "sequential" runs inside a
// one-thread rayon pool; build with `--no-default-features` to time the
// rayon-free fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lyapforge::diffcore::BoundNet;
use lyapforge::dynamics::BoxDomain;
use lyapforge::expio::{target_value, TargetField};
use lyapforge::nets::{init_params, ArchSpec};
use lyapforge::train::{mse_and_grad, sample_uniform_box};
use lyapforge::verify::{find_critical_points, CriticalPointConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn fit_gradient(c: &mut Criterion) {
    let model = ArchSpec::polarnet(2).build().unwrap();
    let p = init_params(&model, 0);
    let unit = BoxDomain::symmetric(2, 1.0);
    let xs = sample_uniform_box(&unit, 1024, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let ys: Vec<f64> = xs.rows().map(|x| target_value(TargetField::Eggcrate, x)).collect();
    let mut g = c.benchmark_group("mse_and_grad_1024");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| mse_and_grad(&model, &p, &xs.data, &ys).unwrap()))
        });
    }
    g.finish();
}

fn critical_scan(c: &mut Criterion) {
    let model = ArchSpec::polarnet(2).build().unwrap();
    let p = init_params(&model, 0);
    let unit = BoxDomain::symmetric(2, 1.0);
    let cfg = CriticalPointConfig { grid_res: 21, ..CriticalPointConfig::default() };
    let mut g = c.benchmark_group("critical_points_21");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| find_critical_points(&BoundNet::new(&model, &p), &unit, &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, fit_gradient, critical_scan);
criterion_main!(benches);
