use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use lyapforge::diffcore::{BoundNet, Net, ParamVector};
use lyapforge::dynamics::{simulate, BoxDomain, DynSystem, NetPolicy, SimConfig, SystemId, Trajectory};
use lyapforge::expio::{
    export_contour_grid, export_history, export_phase_portrait, export_trajectories, load_checkpoint, load_config,
    parse_config, save_checkpoint, write_json, Checkpoint, CheckpointMeta, Role, TargetField,
};
use lyapforge::nets::Model;
use lyapforge::train::{fit_function, synthesize_controller, ExperimentConfig, Mode};
use lyapforge::verify::{
    check_positive_definite, check_vdot_negative, circle_states, find_critical_points, roa_estimate, roa_grid,
    CriticalPointConfig,
};

/// Tolerance on `V(0)` and on the distance of the single critical point.
const ORIGIN_VALUE_TOL: f64 = 1e-12;
const ORIGIN_POINT_TOL: f64 = 1e-3;
const POSITIVITY_SAMPLES: usize = 10_000;

#[derive(Parser, Debug)]
#[command(name = "lyapforge", version, about = "Neural Lyapunov control workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Checkpoint to load; may be given twice (Lyapunov and controller).
    #[arg(long, global = true)]
    checkpoint: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid resolution per axis for scans and exports.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Starts from a named preset; `--config` keys override it.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a Lyapunov candidate to a target field.
    Fit(Common),
    /// Train a controller together with a Lyapunov candidate.
    Synth(Common),
    /// Roll out a checkpointed controller.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Initial state as `x1,x2`; repeatable. Defaults to a grid.
        #[arg(long, value_delimiter = ',', num_args = 1, action = clap::ArgAction::Append, allow_hyphen_values = true)]
        x0: Vec<f64>,
    },
    /// Check a Lyapunov checkpoint; exit 3 when a check fails.
    Verify(Common),
    /// Regenerate CSV exports from checkpoints.
    Export(Common),
}

enum Failure {
    Usage(String),
    Runtime(String),
    Negative,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn init_threads() -> Res<()> {
    if let Ok(v) = std::env::var("LYAPFORGE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Failure::Usage(format!("LYAPFORGE_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn out_dir(c: &Common) -> Res<PathBuf> {
    let dir = c.out.clone().ok_or_else(|| Failure::Usage("--out DIR is required".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

// A config that cannot be read or fails validation is the caller's mistake.
fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn resolve_config(c: &Common, mode: Mode) -> Res<ExperimentConfig> {
    let mut cfg = match (&c.config, &c.preset) {
        (None, None) => return Err(Failure::Usage("--config PATH or --preset NAME is required".into())),
        (Some(p), None) => load_config(p).map_err(usage)?,
        (path, Some(name)) => {
            let mut v: Value = match path {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text).map_err(usage)?
                }
                None => json!({}),
            };
            if let Some(o) = v.as_object_mut() {
                o.insert("preset".into(), Value::String(name.clone()));
            }
            parse_config(&v.to_string()).map_err(usage)?
        }
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if cfg.mode != mode {
        return Err(Failure::Usage(format!("config mode does not match this subcommand ({:?})", cfg.mode)));
    }
    Ok(cfg)
}

/// Writes `manifest.json` listing every output with its hash.
fn write_manifest(dir: &Path, command: &str, config: Option<&ExperimentConfig>, seed: Option<u64>, files: &[&str]) -> Res<()> {
    let mut listed = Vec::new();
    for f in files {
        let bytes = std::fs::read(dir.join(f))?;
        listed.push(json!({ "file": f, "sha256": sha256_hex(&bytes) }));
    }
    let config_hash = match config {
        Some(c) => Value::String(sha256_hex(serde_json::to_string(c)?.as_bytes())),
        None => Value::Null,
    };
    let manifest = json!({
        "command": command,
        "config_sha256": config_hash,
        "seed": seed,
        "versions": {
            "lyapforge": env!("CARGO_PKG_VERSION"),
            "checkpoint_format": lyapforge::expio::FORMAT_VERSION,
        },
        "outputs": listed,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(())
}

fn unit_box(dim: usize) -> BoxDomain {
    BoxDomain::symmetric(dim, 1.0)
}

fn cmd_fit(c: &Common) -> Res<()> {
    let cfg = resolve_config(c, Mode::Fit)?;
    let dir = out_dir(c)?;
    log::info!("fitting {} to {:?} for {} steps", cfg.lyapunov.arch.kind(), cfg.target, cfg.steps);
    let o = fit_function(&cfg)?;
    let meta = CheckpointMeta {
        role: Role::Lyapunov,
        seed: cfg.seed,
        steps: cfg.steps as u64,
        final_loss: o.history.final_loss(),
        system: None,
        target: cfg.target,
    };
    save_checkpoint(&dir.join("lyapunov.json"), &Checkpoint::new(cfg.lyapunov.arch.clone(), &o.params, meta))?;
    write_json(&dir.join("config.json"), &cfg)?;
    export_history(&o.history, &dir.join("history.csv"))?;
    let res = c.grid.unwrap_or(101);
    let field = BoundNet::new(&o.model, &o.params);
    export_contour_grid(&field, &cfg.sampler.domain, res, &dir.join("contour.csv"))?;
    let target: TargetField = cfg.target.expect("validated");
    export_contour_grid(&target, &cfg.sampler.domain, res, &dir.join("target_contour.csv"))?;
    let cp = find_critical_points(&field, &cfg.sampler.domain, &CriticalPointConfig::default())?;
    let report = json!({
        "holdout_mse": o.holdout_mse,
        "final_loss": o.history.final_loss(),
        "critical_points": cp.points,
    });
    write_json(&dir.join("report.json"), &report)?;
    log::info!("holdout mse {:.3e}, {} critical points", o.holdout_mse, cp.points.len());
    write_manifest(
        &dir,
        "fit",
        Some(&cfg),
        Some(cfg.seed),
        &["lyapunov.json", "config.json", "history.csv", "contour.csv", "target_contour.csv", "report.json"],
    )
}

/// Initial states used to judge a controller on a given system.
fn default_starts(id: Option<SystemId>, grid: Option<usize>) -> Vec<Vec<f64>> {
    match id {
        Some(SystemId::BoundedInput) => circle_states(0.7, grid.unwrap_or(6).pow(2)),
        _ => roa_grid(-0.8, 0.8, grid.unwrap_or(6)),
    }
}

fn rollouts(sys: &dyn DynSystem, policy: &NetPolicy, starts: &[Vec<f64>]) -> Res<Vec<Trajectory>> {
    let sim = SimConfig::default();
    let mut out = Vec::with_capacity(starts.len());
    for x0 in starts {
        out.push(simulate(sys, policy, x0, &sim)?);
    }
    Ok(out)
}

fn cmd_synth(c: &Common) -> Res<()> {
    let cfg = resolve_config(c, Mode::Synthesize)?;
    let dir = out_dir(c)?;
    let id = cfg.system.expect("validated");
    log::info!("synthesising on {} for {} steps", id.as_str(), cfg.steps);
    let o = synthesize_controller(&cfg)?;
    let final_loss = o.history.final_loss();
    let meta = |role| CheckpointMeta {
        role,
        seed: cfg.seed,
        steps: cfg.steps as u64,
        final_loss,
        system: Some(id),
        target: None,
    };
    let ucfg = cfg.controller.as_ref().expect("validated");
    save_checkpoint(&dir.join("lyapunov.json"), &Checkpoint::new(cfg.lyapunov.arch.clone(), &o.v_params, meta(Role::Lyapunov)))?;
    save_checkpoint(&dir.join("controller.json"), &Checkpoint::new(ucfg.arch.clone(), &o.u_params, meta(Role::Controller)))?;
    write_json(&dir.join("config.json"), &cfg)?;
    export_history(&o.history, &dir.join("history.csv"))?;

    let sys = id.build();
    let policy = NetPolicy::new(o.u_model.clone(), o.u_params.clone())?;
    let starts = default_starts(Some(id), None);
    let roa = roa_estimate(&sys, &policy, &starts, &SimConfig::default())?;
    let trajs = rollouts(sys.as_ref(), &policy, &starts)?;
    export_trajectories(&trajs, &dir.join("trajectories.csv"))?;
    let res = c.grid.unwrap_or(21);
    export_phase_portrait(&sys, &policy, sys.domain(), res, &dir.join("phase_portrait.csv"))?;
    let v = BoundNet::new(&o.v_model, &o.v_params);
    export_contour_grid(&v, sys.domain(), 101, &dir.join("contour.csv"))?;
    let vdot = check_vdot_negative(&v, &sys, &policy, sys.domain(), 41, 0.0)?;
    write_json(
        &dir.join("roa.json"),
        &json!({
            "roa": roa,
            "vdot": vdot,
            "lqr_gain": o.lqr_gain.as_ref().map(|k| &k.data),
            "final_loss": final_loss,
        }),
    )?;
    log::info!("converged fraction {:.3}, V̇ violation fraction {:.4}", roa.converged_fraction, vdot.violation_fraction);
    write_manifest(
        &dir,
        "synth",
        Some(&cfg),
        Some(cfg.seed),
        &[
            "lyapunov.json",
            "controller.json",
            "config.json",
            "history.csv",
            "trajectories.csv",
            "phase_portrait.csv",
            "contour.csv",
            "roa.json",
        ],
    )
}

struct Loaded {
    ck: Checkpoint,
    model: Model,
    params: ParamVector,
}

fn load_all(c: &Common) -> Res<(Option<Loaded>, Option<Loaded>)> {
    if c.checkpoint.is_empty() {
        return Err(Failure::Usage("--checkpoint PATH is required".into()));
    }
    let (mut v, mut u) = (None, None);
    for p in &c.checkpoint {
        let ck = load_checkpoint(p)?;
        let (model, params) = ck.to_params()?;
        let slot = match ck.metadata.role {
            Role::Lyapunov => &mut v,
            Role::Controller => &mut u,
        };
        if slot.is_some() {
            return Err(Failure::Usage(format!("two {:?} checkpoints given", ck.metadata.role)));
        }
        *slot = Some(Loaded { ck, model, params });
    }
    Ok((v, u))
}

fn controller_parts(u: &Loaded) -> Res<(Box<dyn DynSystem>, NetPolicy)> {
    let id = u
        .ck
        .metadata
        .system
        .ok_or_else(|| Failure::Runtime("controller checkpoint does not name its system".into()))?;
    Ok((id.build(), NetPolicy::new(u.model.clone(), u.params.clone())?))
}

fn cmd_simulate(c: &Common, x0: &[f64]) -> Res<()> {
    let dir = out_dir(c)?;
    let (_, u) = load_all(c)?;
    let u = u.ok_or_else(|| Failure::Usage("simulate needs a controller checkpoint".into()))?;
    let (sys, policy) = controller_parts(&u)?;
    let m = sys.state_dim();
    let starts: Vec<Vec<f64>> = if x0.is_empty() {
        default_starts(u.ck.metadata.system, c.grid)
    } else {
        if x0.len() % m != 0 {
            return Err(Failure::Usage(format!("--x0 needs {m} values per state")));
        }
        x0.chunks(m).map(<[f64]>::to_vec).collect()
    };
    let trajs = rollouts(sys.as_ref(), &policy, &starts)?;
    export_trajectories(&trajs, &dir.join("trajectories.csv"))?;
    let roa = roa_estimate(&sys, &policy, &starts, &SimConfig::default())?;
    write_json(&dir.join("roa.json"), &roa)?;
    log::info!("converged fraction {:.3}", roa.converged_fraction);
    write_manifest(&dir, "simulate", None, Some(u.ck.metadata.seed), &["trajectories.csv", "roa.json"])
}

fn cmd_verify(c: &Common) -> Res<()> {
    let (v, u) = load_all(c)?;
    let v = v.ok_or_else(|| Failure::Usage("verify needs a Lyapunov checkpoint".into()))?;
    let field = BoundNet::new(&v.model, &v.params);
    let parts = u.as_ref().map(controller_parts).transpose()?;
    let domain = parts.as_ref().map_or_else(|| unit_box(v.model.input_dim()), |(s, _)| s.domain().clone());
    let grid = c.grid.unwrap_or(41);
    let cp = find_critical_points(&field, &domain, &CriticalPointConfig::with_grid(grid))?;
    let pd = check_positive_definite(&field, &domain, POSITIVITY_SAMPLES, c.seed.unwrap_or(0))?;
    let vdot = match &parts {
        Some((sys, policy)) => Some(check_vdot_negative(&field, sys, policy, &domain, grid, 0.0)?),
        None => None,
    };
    let single = cp.single_at_origin(ORIGIN_POINT_TOL);
    let positive = pd.holds(ORIGIN_VALUE_TOL);
    let report = json!({
        "critical_points": cp,
        "positive_definite": pd,
        "vdot": vdot,
        "single_critical_point_at_origin": single,
        "positive_definite_holds": positive,
        "passed": single && positive,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = &c.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("verify.json"), &report)?;
        write_manifest(dir, "verify", None, c.seed, &["verify.json"])?;
    }
    if single && positive {
        Ok(())
    } else {
        Err(Failure::Negative)
    }
}

fn cmd_export(c: &Common) -> Res<()> {
    let dir = out_dir(c)?;
    let (v, u) = load_all(c)?;
    let mut files = Vec::new();
    let parts = u.as_ref().map(controller_parts).transpose()?;
    if let Some(v) = &v {
        let field = BoundNet::new(&v.model, &v.params);
        let domain = parts.as_ref().map_or_else(|| unit_box(v.model.input_dim()), |(s, _)| s.domain().clone());
        export_contour_grid(&field, &domain, c.grid.unwrap_or(101), &dir.join("contour.csv"))?;
        files.push("contour.csv");
    }
    if let (Some(u), Some((sys, policy))) = (&u, &parts) {
        export_phase_portrait(sys, policy, sys.domain(), c.grid.unwrap_or(21), &dir.join("phase_portrait.csv"))?;
        let trajs = rollouts(sys.as_ref(), policy, &default_starts(u.ck.metadata.system, None))?;
        export_trajectories(&trajs, &dir.join("trajectories.csv"))?;
        files.extend(["phase_portrait.csv", "trajectories.csv"]);
    }
    let seed = v.as_ref().or(u.as_ref()).map(|l| l.ck.metadata.seed);
    write_manifest(&dir, "export", None, seed, &files)
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Fit(c) | Command::Synth(c) | Command::Verify(c) | Command::Export(c) => c,
        Command::Simulate { common, .. } => common,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = common(&cli.command);
    let level = if c.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).parse_env("LYAPFORGE_LOG").init();

    let result = init_threads().and_then(|_| match &cli.command {
        Command::Fit(c) => cmd_fit(c),
        Command::Synth(c) => cmd_synth(c),
        Command::Simulate { common, x0 } => cmd_simulate(common, x0),
        Command::Verify(c) => cmd_verify(c),
        Command::Export(c) => cmd_export(c),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            let mut cmd = Cli::command();
            eprintln!("{}", cmd.error(clap::error::ErrorKind::MissingRequiredArgument, msg).render());
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Negative) => ExitCode::from(3),
    }
}
