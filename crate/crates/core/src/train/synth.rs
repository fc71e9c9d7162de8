use crate::diffcore::{BoundNet, DiffError, Net, ParamVector, Tape};
use crate::dynamics::{linearize, lqr_gain, DynSystem, Mat};
use crate::exec::map_chunks;
use crate::nets::{init_params, Model};
use crate::verify::{find_critical_points, CriticalPointConfig};

use super::fit::{stream, SAMPLE_STREAM};
use super::loss::record_lie;
use super::{sample_uniform_box, Adam, AdamConfig, ExperimentConfig, Mode, Snapshot, TrainError, TrainingHistory};

/// Rows per tape during synthesis.
pub const SYNTH_CHUNK: usize = 64;

/// Decorrelates the controller initialisation from the Lyapunov one.
const CONTROLLER_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;
const WARM_START_STREAM: u64 = 3;

#[derive(Clone, Debug)]
pub struct SynthOutcome {
    pub v_model: Model,
    pub v_params: ParamVector,
    pub u_model: Model,
    pub u_params: ParamVector,
    pub history: TrainingHistory,
    /// Imitation losses of the LQR warm start, if it ran.
    pub warm_start_losses: Vec<f64>,
    /// The LQR gain used by the warm start.
    pub lqr_gain: Option<Mat>,
}

struct ChunkOut {
    loss: f64,
    violations: usize,
    gv: ParamVector,
    gu: ParamVector,
}

/// Summed hinge terms over one chunk and their gradients for both nets.
///
/// With `canonical` the hinge also penalises `V < 0`; the `V(0)²` term is
/// handled once per batch by the caller.
#[allow(clippy::too_many_arguments)]
fn hinge_chunk(
    v_model: &Model,
    v_params: &ParamVector,
    u_model: &Model,
    u_params: &ParamVector,
    sys: &dyn DynSystem,
    xs: &[f64],
    margin: f64,
    canonical: bool,
) -> Result<ChunkOut, TrainError> {
    let m = sys.state_dim();
    let rows = xs.len() / m;
    let mut tape = Tape::with_capacity(1024, 512 * xs.len());
    let pv = v_params.record(&mut tape);
    let pu = u_params.record(&mut tape);
    let x = tape.leaf(rows, m, xs);
    let v = v_model.record(&mut tape, &pv, x)?;
    let u = u_model.record(&mut tape, &pu, x)?;
    let vd = record_lie(&mut tape, v, x, u, sys)?;
    let shifted = tape.shift(vd, margin);
    let mut h = tape.relu(shifted);
    let violations = tape.value(shifted).iter().filter(|d| **d > 0.0).count();
    if canonical {
        let nv = tape.neg(v);
        let pos = tape.relu(nv);
        h = tape.add(h, pos);
    }
    let s = tape.sum(h);
    let mut targets = pv.clone();
    targets.extend_from_slice(&pu);
    let g = tape.grad(s, &targets);
    let gv = v_params.gather(&tape, &g[..pv.len()]);
    let gu = u_params.gather(&tape, &g[pv.len()..]);
    Ok(ChunkOut { loss: tape.scalar_value(s), violations, gv, gu })
}

/// `V(0)²` and its parameter gradient.
fn origin_penalty(v_model: &Model, v_params: &ParamVector) -> Result<(f64, ParamVector), DiffError> {
    let mut tape = Tape::new();
    let p = v_params.record(&mut tape);
    let x = tape.zeros(1, v_model.input_dim());
    let v = v_model.record(&mut tape, &p, x)?;
    let sq = tape.square(v);
    let g = tape.grad(sq, &p);
    Ok((tape.scalar_value(sq), v_params.gather(&tape, &g)))
}

/// Sum of `‖u(x) + Kx‖²` over a chunk and its gradient.
fn imitation_chunk(
    u_model: &Model,
    u_params: &ParamVector,
    k: &Mat,
    xs: &[f64],
) -> Result<(f64, ParamVector), DiffError> {
    let m = u_model.input_dim();
    let rows = xs.len() / m;
    let mut target = Vec::with_capacity(rows * k.rows);
    for x in xs.chunks_exact(m) {
        target.extend(k.apply(x).into_iter().map(|v| -v));
    }
    let mut tape = Tape::new();
    let p = u_params.record(&mut tape);
    let x = tape.leaf(rows, m, xs);
    let u = u_model.record(&mut tape, &p, x)?;
    let t = tape.leaf(rows, k.rows, &target);
    let d = tape.sub(u, t);
    let sq = tape.square(d);
    let s = tape.sum(sq);
    let g = tape.grad(s, &p);
    Ok((tape.scalar_value(s), u_params.gather(&tape, &g)))
}

fn fault(step: u64) -> impl Fn(DiffError) -> TrainError {
    move |e| TrainError::NumericFault { step, detail: e.to_string() }
}

/// Pre-trains the controller to imitate `u = -Kx` with `K` from LQR on the
/// linearisation (`Q = I`, `R = I`).
fn warm_start(
    cfg: &ExperimentConfig,
    sys: &dyn DynSystem,
    u_model: &Model,
    u_params: &mut ParamVector,
    steps: u64,
    lr: f64,
) -> Result<(Mat, Vec<f64>), TrainError> {
    let lin = linearize(sys, 1e-6)?;
    let (m, n) = (sys.state_dim(), sys.input_dim());
    let (k, _) = lqr_gain(&lin, &Mat::identity(m), &Mat::identity(n))?;
    let base = &cfg.controller.as_ref().expect("validated").optimizer;
    let mut opt = Adam::new(AdamConfig { lr, warmup: 0, weight_decay: 0.0, ..base.clone() }, u_params.len());
    let mut rng = stream(cfg.seed, WARM_START_STREAM);
    let batch = cfg.sampler.batch as usize;
    let mut losses = Vec::with_capacity(steps as usize);
    for step in 1..=steps {
        let b = sample_uniform_box(&cfg.sampler.domain, batch, 0.0, &mut rng)?;
        let parts = map_chunks(b.len(), SYNTH_CHUNK, |r| imitation_chunk(u_model, u_params, &k, &b.data[r.start * m..r.end * m]));
        let mut loss = 0.0;
        let mut grad = ParamVector::zeros(u_params.layout.clone());
        for part in parts {
            let (s, g) = part.map_err(fault(step))?;
            loss += s;
            grad.accumulate(&g);
        }
        let inv = 1.0 / b.len() as f64;
        grad.scale(inv);
        loss *= inv;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(TrainError::NumericFault { step, detail: "non-finite imitation loss".into() });
        }
        opt.update(u_params, &grad)?;
        losses.push(loss);
    }
    Ok((k, losses))
}

/// Jointly trains a controller and a Lyapunov candidate on the configured
/// system.
///
/// Structurally positive-definite candidates minimise the reduced risk
/// `mean max(0, V̇ + ε)`. Other candidates also carry `max(0, -V)` and `V(0)²`
/// so that positivity is learned rather than assumed.
pub fn synthesize_controller(cfg: &ExperimentConfig) -> Result<SynthOutcome, TrainError> {
    cfg.validate().map_err(TrainError::Invalid)?;
    if cfg.mode != Mode::Synthesize {
        return Err(TrainError::Config("configuration is not in synthesize mode".into()));
    }
    let sys = cfg.system.expect("validated").build();
    let ucfg = cfg.controller.as_ref().expect("validated");
    let v_model = cfg.lyapunov.arch.build().expect("validated");
    let u_model = ucfg.arch.build().expect("validated");
    let mut v_params = init_params(&v_model, cfg.seed);
    let mut u_params = init_params(&u_model, cfg.seed ^ CONTROLLER_SEED_MIX);

    let mut warm_start_losses = Vec::new();
    let mut gain = None;
    if let Some(w) = &cfg.lqr_warm_start {
        let (k, losses) = warm_start(cfg, sys.as_ref(), &u_model, &mut u_params, w.steps as u64, w.lr)?;
        log::info!("LQR warm start: gain {:?}, final imitation loss {:.3e}", k.data, losses.last().copied().unwrap_or(0.0));
        gain = Some(k);
        warm_start_losses = losses;
    }

    let canonical = !v_model.is_structurally_positive_definite();
    let mut opt_v = Adam::new(cfg.lyapunov.optimizer.clone(), v_params.len());
    let mut opt_u = Adam::new(ucfg.optimizer.clone(), u_params.len());
    let mut rng = stream(cfg.seed, SAMPLE_STREAM);
    let batch = cfg.sampler.batch as usize;
    let m = sys.state_dim();
    let mut history = TrainingHistory::default();

    for step in 1..=cfg.steps as u64 {
        let b = sample_uniform_box(&cfg.sampler.domain, batch, cfg.sampler.cutoff_radius, &mut rng)?;
        let parts = map_chunks(b.len(), SYNTH_CHUNK, |r| {
            hinge_chunk(
                &v_model,
                &v_params,
                &u_model,
                &u_params,
                sys.as_ref(),
                &b.data[r.start * m..r.end * m],
                cfg.margin,
                canonical,
            )
        });
        let mut loss = 0.0;
        let mut violations = 0;
        let mut gv = ParamVector::zeros(v_params.layout.clone());
        let mut gu = ParamVector::zeros(u_params.layout.clone());
        for part in parts {
            let c = part.map_err(|e| match e {
                TrainError::Diff(d) => fault(step)(d),
                other => other,
            })?;
            loss += c.loss;
            violations += c.violations;
            gv.accumulate(&c.gv);
            gu.accumulate(&c.gu);
        }
        let inv = 1.0 / b.len() as f64;
        loss *= inv;
        gv.scale(inv);
        gu.scale(inv);
        if canonical {
            let (p0, g0) = origin_penalty(&v_model, &v_params).map_err(fault(step))?;
            loss += p0;
            gv.accumulate(&g0);
        }
        if !loss.is_finite() || !gv.is_finite() || !gu.is_finite() {
            return Err(TrainError::NumericFault { step, detail: "non-finite risk or gradient".into() });
        }
        opt_v.update(&mut v_params, &gv)?;
        opt_u.update(&mut u_params, &gu)?;
        v_params.ensure_finite().map_err(fault(step))?;
        u_params.ensure_finite().map_err(fault(step))?;
        history.losses.push(loss);

        if cfg.snapshot_every > 0 && step % cfg.snapshot_every as u64 == 0 {
            let report = find_critical_points(
                &BoundNet::new(&v_model, &v_params),
                &cfg.sampler.domain,
                &CriticalPointConfig::with_grid(cfg.snapshot_grid as usize),
            )?;
            history.snapshots.push(Snapshot {
                step,
                loss,
                violation_fraction: Some(violations as f64 * inv),
                critical_points: Some(report.points.len()),
            });
        }
        if step % 1000 == 0 {
            log::debug!("synth step {step}: risk {loss:.3e}, violations {violations}/{}", b.len());
        }
    }

    Ok(SynthOutcome {
        v_model,
        v_params,
        u_model,
        u_params,
        history,
        warm_start_losses,
        lqr_gain: gain,
    })
}
