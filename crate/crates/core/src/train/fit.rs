use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{BoundNet, DiffError, Net, ParamVector, ScalarField, Tape};
use crate::dynamics::BoxDomain;
use crate::exec::map_chunks;
use crate::nets::{init_params, Model};
use crate::verify::{find_critical_points, CriticalPointConfig};

use super::{sample_uniform_box, Adam, ExperimentConfig, Mode, Snapshot, TrainError, TrainingHistory};

/// Rows per tape when fitting; fixed so results do not depend on threads.
pub const FIT_CHUNK: usize = 256;

pub(crate) const SAMPLE_STREAM: u64 = 1;
pub(crate) const HOLDOUT_STREAM: u64 = 2;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: Model,
    pub params: ParamVector,
    pub history: TrainingHistory,
    /// Mean squared error on an independent uniform sample of the box.
    pub holdout_mse: f64,
}

/// Sum of squared errors over `xs` and its parameter gradient.
fn sse_chunk(
    model: &Model,
    params: &ParamVector,
    xs: &[f64],
    targets: &[f64],
) -> Result<(f64, ParamVector), DiffError> {
    let m = model.input_dim();
    let mut tape = Tape::with_capacity(256, 64 * xs.len());
    let p = params.record(&mut tape);
    let x = tape.leaf(xs.len() / m, m, xs);
    let v = model.record(&mut tape, &p, x)?;
    let t = tape.leaf(targets.len(), 1, targets);
    let d = tape.sub(v, t);
    let sq = tape.square(d);
    let s = tape.sum(sq);
    let g = tape.grad(s, &p);
    Ok((tape.scalar_value(s), params.gather(&tape, &g)))
}

/// Mean squared error and its gradient over a batch, reduced in chunk order.
pub fn mse_and_grad(
    model: &Model,
    params: &ParamVector,
    xs: &[f64],
    targets: &[f64],
) -> Result<(f64, ParamVector), DiffError> {
    let m = model.input_dim();
    let n = targets.len();
    let parts = map_chunks(n, FIT_CHUNK, |r| sse_chunk(model, params, &xs[r.start * m..r.end * m], &targets[r]));
    let mut total = 0.0;
    let mut grad = ParamVector::zeros(params.layout.clone());
    for part in parts {
        let (s, g) = part?;
        total += s;
        grad.accumulate(&g);
    }
    grad.scale(1.0 / n as f64);
    Ok((total / n as f64, grad))
}

/// Held-out error of `field` against `target` on `count` fresh samples.
pub fn holdout_mse(
    field: &(impl ScalarField + ?Sized),
    target: &(impl ScalarField + ?Sized),
    domain: &BoxDomain,
    count: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let mut rng = stream(seed, HOLDOUT_STREAM);
    let b = sample_uniform_box(domain, count, 0.0, &mut rng)?;
    let parts = map_chunks(b.len(), 1024, |r| -> Result<f64, DiffError> {
        let xs = &b.data[r.start * b.dim..r.end * b.dim];
        let p = field.values(xs)?;
        let t = target.values(xs)?;
        Ok(p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum())
    });
    let mut s = 0.0;
    for p in parts {
        s += p?;
    }
    Ok(s / b.len() as f64)
}

/// Fits the configured architecture to the configured target field by
/// minimising the mean squared error on fresh uniform batches.
pub fn fit_function(cfg: &ExperimentConfig) -> Result<FitOutcome, TrainError> {
    cfg.validate().map_err(TrainError::Invalid)?;
    if cfg.mode != Mode::Fit {
        return Err(TrainError::Config("configuration is not in fit mode".into()));
    }
    let target = cfg.target.expect("validated");
    let model = cfg.lyapunov.arch.build().expect("validated");
    let mut params = init_params(&model, cfg.seed);
    let mut opt = Adam::new(cfg.lyapunov.optimizer.clone(), params.len());
    let mut rng = stream(cfg.seed, SAMPLE_STREAM);
    let batch = cfg.sampler.batch as usize;
    let mut history = TrainingHistory::default();

    for step in 1..=cfg.steps as u64 {
        let b = sample_uniform_box(&cfg.sampler.domain, batch, cfg.sampler.cutoff_radius, &mut rng)?;
        let targets: Vec<f64> = b.rows().map(|x| target.eval(x)).collect();
        let (loss, grad) = mse_and_grad(&model, &params, &b.data, &targets)
            .map_err(|e| TrainError::NumericFault { step, detail: e.to_string() })?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(TrainError::NumericFault { step, detail: "non-finite loss or gradient".into() });
        }
        opt.update(&mut params, &grad)?;
        params.ensure_finite().map_err(|e| TrainError::NumericFault { step, detail: e.to_string() })?;
        history.losses.push(loss);
        if cfg.snapshot_every > 0 && step % cfg.snapshot_every as u64 == 0 {
            let report = find_critical_points(
                &BoundNet::new(&model, &params),
                &cfg.sampler.domain,
                &CriticalPointConfig::with_grid(cfg.snapshot_grid as usize),
            )?;
            history.snapshots.push(Snapshot {
                step,
                loss,
                violation_fraction: None,
                critical_points: Some(report.points.len()),
            });
        }
        if step % 500 == 0 {
            log::debug!("fit step {step}: mse {loss:.3e}");
        }
    }

    let holdout_mse = holdout_mse(
        &BoundNet::new(&model, &params),
        &target,
        &cfg.sampler.domain,
        cfg.holdout as usize,
        cfg.seed,
    )?;
    Ok(FitOutcome { model, params, history, holdout_mse })
}
