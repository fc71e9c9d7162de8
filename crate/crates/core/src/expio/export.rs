use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::diffcore::ScalarField;
use crate::dynamics::{BoxDomain, DynSystem, Policy, Trajectory};
use crate::train::TrainingHistory;
use crate::verify::linspace;

use super::ExpioError;

/// Digits after the point in exported reals (17 significant in total).
pub const FLOAT_FORMAT_DIGITS: usize = 16;

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, ExpioError> {
    let f = File::create(path).map_err(|e| ExpioError::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(f)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ExpioError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => ExpioError::io(path, io),
        other => ExpioError::Parse(format!("{other:?}")),
    }
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<(), ExpioError> {
    let mut inner = w.into_inner().map_err(|e| ExpioError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| ExpioError::io(path, e))
}

/// Grid points with inclusive endpoints on each axis of a 2-D box, `x1`
/// varying fastest.
fn plane_grid(domain: &BoxDomain, res: usize) -> Result<Vec<f64>, ExpioError> {
    if domain.dim() != 2 {
        return Err(ExpioError::Range { path: "box".into(), message: "exports are two-dimensional".into() });
    }
    if res < 2 {
        return Err(ExpioError::Range { path: "res".into(), message: "must be at least 2".into() });
    }
    let a = linspace(domain.lo[0], domain.hi[0], res);
    let b = linspace(domain.lo[1], domain.hi[1], res);
    let mut out = Vec::with_capacity(2 * res * res);
    for &y in &b {
        for &x in &a {
            out.push(x);
            out.push(y);
        }
    }
    Ok(out)
}

/// Writes `x1,x2,v` over a `res × res` grid; returns the row count.
pub fn export_contour_grid(
    field: &(impl ScalarField + ?Sized),
    domain: &BoxDomain,
    res: usize,
    path: &Path,
) -> Result<usize, ExpioError> {
    let xs = plane_grid(domain, res)?;
    let vs = field.values(&xs).map_err(|e| ExpioError::NumericFault(e.to_string()))?;
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(["x1", "x2", "v"]).map_err(&err)?;
    for (x, v) in xs.chunks_exact(2).zip(&vs) {
        w.write_record([real(x[0]), real(x[1]), real(*v)]).map_err(&err)?;
    }
    finish(path, w)?;
    Ok(vs.len())
}

/// Writes `traj_id,t,x1,…,xm,termination`, one row per recorded state.
pub fn export_trajectories(trajs: &[Trajectory], path: &Path) -> Result<usize, ExpioError> {
    let m = trajs.iter().find_map(|t| t.states.first().map(Vec::len)).unwrap_or(2);
    let mut header = vec!["traj_id".to_string(), "t".to_string()];
    header.extend((1..=m).map(|i| format!("x{i}")));
    header.push("termination".into());
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(&header).map_err(&err)?;
    let mut rows = 0;
    for (id, tr) in trajs.iter().enumerate() {
        for (t, x) in tr.times.iter().zip(&tr.states) {
            let mut rec = vec![id.to_string(), real(*t)];
            rec.extend(x.iter().map(|v| real(*v)));
            rec.push(tr.termination.as_str().to_string());
            w.write_record(&rec).map_err(&err)?;
            rows += 1;
        }
    }
    finish(path, w)?;
    Ok(rows)
}

/// Writes the closed-loop vector field `x1,x2,dx1,dx2` over a grid.
pub fn export_phase_portrait(
    sys: &(impl DynSystem + ?Sized),
    policy: &(impl Policy + ?Sized),
    domain: &BoxDomain,
    res: usize,
    path: &Path,
) -> Result<usize, ExpioError> {
    let xs = plane_grid(domain, res)?;
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(["x1", "x2", "dx1", "dx2"]).map_err(&err)?;
    for x in xs.chunks_exact(2) {
        let f = sys.rhs(x, &policy.act(x));
        w.write_record([real(x[0]), real(x[1]), real(f[0]), real(f[1])]).map_err(&err)?;
    }
    finish(path, w)?;
    Ok(res * res)
}

/// Writes `step,loss,violation_fraction,critical_points`; the last two are
/// empty on steps without a snapshot.
pub fn export_history(history: &TrainingHistory, path: &Path) -> Result<usize, ExpioError> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(["step", "loss", "violation_fraction", "critical_points"]).map_err(&err)?;
    let mut snaps = history.snapshots.iter().peekable();
    for (i, loss) in history.losses.iter().enumerate() {
        let step = i as u64 + 1;
        let (vf, cp) = match snaps.peek() {
            Some(s) if s.step == step => {
                let s = snaps.next().expect("peeked");
                (s.violation_fraction.map(real).unwrap_or_default(), s.critical_points.map(|c| c.to_string()).unwrap_or_default())
            }
            _ => (String::new(), String::new()),
        };
        w.write_record([step.to_string(), real(*loss), vf, cp]).map_err(&err)?;
    }
    finish(path, w)?;
    Ok(history.losses.len())
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ExpioError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExpioError::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ExpioError::io(path, e))
}
