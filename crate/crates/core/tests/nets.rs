mod common;

use common::{rng, uniform};
use lyapforge::diffcore::{eval_batch, value_and_input_grad_batch, Net, ParamVector};
use lyapforge::nets::{
    coupling_forward, coupling_inverse, init_params, lyapunov_value, psi_forward, psi_inverse, ArchSpec, CouplingSpec,
    Model, PolarNetSpec,
};
use lyapforge::train::fit_function;
use lyapforge::verify::linspace;
use proptest::prelude::*;

fn polarnet() -> (PolarNetSpec, Model) {
    let model = ArchSpec::polarnet(2).build().unwrap();
    (model.as_polarnet().unwrap().clone(), model)
}

fn scaled(model: &Model, seed: u64, factor: f64) -> ParamVector {
    let mut p = init_params(model, seed);
    p.scale(factor);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    // 100 parameter draws × 1000 states.
    #[test]
    fn polarnet_is_positive_definite(seed in any::<u64>(), factor in 0.1f64..4.0) {
        let (_, model) = polarnet();
        let p = scaled(&model, seed, factor);
        prop_assert_eq!(lyapunov_value(&model, &p, &[0.0, 0.0]).unwrap(), 0.0);
        let xs = uniform(&mut rng(seed ^ 1), 2000, 1.0);
        let vs = eval_batch(&model, &p, &xs).unwrap();
        for (x, v) in xs.chunks_exact(2).zip(&vs) {
            prop_assert!(*v > 0.0, "V({x:?}) = {v}");
        }
    }

    #[test]
    fn coupling_layer_round_trips(seed in any::<u64>(), keep_low in any::<bool>(), y in prop::collection::vec(-2.0f64..2.0, 2)) {
        let layer = CouplingSpec::new(2, 1, keep_low, &[12, 12]).unwrap();
        let mut p = init_params(&layer, seed);
        p.scale(2.0);
        let z = coupling_forward(&layer, &p, &y).unwrap();
        let back = coupling_inverse(&layer, &p, &z).unwrap();
        let err = ((back[0] - y[0]).powi(2) + (back[1] - y[1]).powi(2)).sqrt();
        prop_assert!(err < 1e-10, "round-trip error {err:e}");
    }

    #[test]
    fn psi_maps_origin_to_origin(seed in any::<u64>(), factor in 0.1f64..4.0) {
        let (spec, model) = polarnet();
        let p = scaled(&model, seed, factor);
        prop_assert_eq!(psi_forward(&spec, &p, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }
}

#[test]
fn psi_round_trip_on_a_thousand_points() {
    let (spec, model) = polarnet();
    let p = scaled(&model, 17, 2.0);
    let xs = uniform(&mut rng(18), 2000, 1.0);
    let worst = xs
        .chunks_exact(2)
        .map(|x| {
            let z = psi_forward(&spec, &p, x).unwrap();
            let back = psi_inverse(&spec, &p, &z).unwrap();
            ((back[0] - x[0]).powi(2) + (back[1] - x[1]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "worst round-trip error {worst:e}");
}

#[test]
fn zero_parameters_give_the_identity() {
    let (spec, model) = polarnet();
    let p = ParamVector::zeros(model.layout());
    assert_eq!(psi_forward(&spec, &p, &[0.3, -0.8]).unwrap(), vec![0.3, -0.8]);
    assert_eq!(lyapunov_value(&model, &p, &[3.0, 4.0]).unwrap(), 25.0);
}

#[test]
fn baseline_values_with_zero_weights() {
    let ln = ArchSpec::lyapunov_net(2).build().unwrap();
    let v = lyapunov_value(&ln, &ParamVector::zeros(ln.layout()), &[1.0, 1.0]).unwrap();
    assert!((v - 0.02).abs() < 1e-15);
    let wei = ArchSpec::wei(2).build().unwrap();
    let v = lyapunov_value(&wei, &ParamVector::zeros(wei.layout()), &[1.0, 0.0]).unwrap();
    assert!((v - 5e-7).abs() < 1e-20);
}

#[test]
fn gradient_vanishes_only_near_the_origin() {
    let (_, model) = polarnet();
    let axis = linspace(-1.0, 1.0, 203);
    // Drop the endpoints: the domain is the open box.
    let axis = &axis[1..202];
    let mut xs = Vec::with_capacity(2 * axis.len() * axis.len());
    for &b in axis {
        for &a in axis {
            if a * a + b * b >= 0.05 * 0.05 {
                xs.push(a);
                xs.push(b);
            }
        }
    }
    for seed in 0..20 {
        let p = scaled(&model, 300 + seed, 2.0);
        let (_, g) = value_and_input_grad_batch(&model, &p, &xs).unwrap();
        let min = g.chunks_exact(2).map(|d| d[0].hypot(d[1])).fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "seed {seed}: min ‖∇V‖ = {min:e}");
    }
}

#[test]
fn init_is_deterministic_per_seed() {
    for a in [ArchSpec::polarnet(2), ArchSpec::plain_mlp(2), ArchSpec::lyapunov_net(2), ArchSpec::wei(2), ArchSpec::controller(2, 2)]
    {
        let m = a.build().unwrap();
        assert_eq!(init_params(&m, 4), init_params(&m, 4));
        assert_ne!(init_params(&m, 4).values, init_params(&m, 5).values);
    }
}

#[test]
fn bias_free_controller_maps_origin_to_zero() {
    let m = ArchSpec::controller(2, 2).build().unwrap();
    let mut p = init_params(&m, 1);
    p.scale(5.0);
    assert_eq!(eval_batch(&m, &p, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
}

// Properness cannot be sampled on an open box; a fitted single-pole V should
// at least grow along every ray towards the corners.
#[test]
fn fitted_polarnet_grows_along_rays() {
    let cfg = common::fit_config("bowl", "polarnet", 5e-3, 0, 600);
    let out = fit_function(&cfg).unwrap();
    for corner in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
        let ts = linspace(0.0, 0.99, 100);
        let xs: Vec<f64> = ts.iter().flat_map(|t| [t * corner[0], t * corner[1]]).collect();
        let vs = eval_batch(&out.model, &out.params, &xs).unwrap();
        assert!(vs.windows(2).all(|w| w[1] > w[0]), "not increasing towards {corner:?}");
    }
}
