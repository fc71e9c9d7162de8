use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, ScalarField, Tape};
use crate::dynamics::{BoxDomain, Mat};
use crate::exec::map_chunks;

use super::{cell_centers, norm, EXCLUSION_RADIUS};

/// Seeds per worker during the descent.
const SEED_CHUNK: usize = 64;
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointConfig {
    /// Seeds per axis; one seed at the centre of every cell.
    pub grid_res: usize,
    /// A point counts as critical once `‖∇V‖ ≤ tol`.
    pub tol: f64,
    pub merge_radius: f64,
    /// Radius of the ball around the origin left out of the raw grid scan.
    pub exclusion_radius: f64,
    /// Trial evaluations allowed per seed, rejected line-search trials included.
    pub max_iter: usize,
}

impl Default for CriticalPointConfig {
    fn default() -> Self {
        CriticalPointConfig { grid_res: 41, tol: 1e-6, merge_radius: 1e-2, exclusion_radius: EXCLUSION_RADIUS, max_iter: 200 }
    }
}

impl CriticalPointConfig {
    pub fn with_grid(grid_res: usize) -> Self {
        CriticalPointConfig { grid_res, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub grad_norm: f64,
    pub value: f64,
    pub distance_to_origin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub points: Vec<CriticalPoint>,
    /// Smallest `‖∇V‖` over the seed grid outside the exclusion ball.
    pub grid_min_gradnorm_outside_ball: f64,
    pub seeds: usize,
    /// Seeds whose descent reached the tolerance.
    pub converged_seeds: usize,
    pub config: CriticalPointConfig,
}

impl CriticalPointReport {
    /// Exactly one point and it lies within `radius` of the origin.
    pub fn single_at_origin(&self, radius: f64) -> bool {
        self.points.len() == 1 && self.points[0].distance_to_origin <= radius
    }
}

/// Values, gradients (B×m) and Hessians (B×m×m) on a batch.
pub fn value_grad_hessian(
    field: &(impl ScalarField + ?Sized),
    xs: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), DiffError> {
    let m = field.dim();
    let rows = xs.len() / m;
    let mut tape = Tape::new();
    let x = tape.leaf(rows, m, xs);
    let v = field.record(&mut tape, x)?;
    let g = tape.grad(v, &[x])[0];
    tape.ensure_finite(g, || "input gradient".into())?;
    let mut hess = vec![0.0; rows * m * m];
    for j in 0..m {
        let gj = tape.slice_cols(g, j, 1);
        let hj = tape.grad(gj, &[x])[0];
        tape.ensure_finite(hj, || "Hessian".into())?;
        let col = tape.value(hj);
        for r in 0..rows {
            for k in 0..m {
                hess[r * m * m + j * m + k] = col[r * m + k];
            }
        }
    }
    Ok((tape.value(v).to_vec(), tape.value(g).to_vec(), hess))
}

/// Gauss–Newton direction for `∇V = 0`, damped so it always exists.
fn direction(g: &[f64], h: &[f64]) -> Vec<f64> {
    let m = g.len();
    let hm = Mat::from_vec(m, m, h.to_vec());
    let ht = hm.t();
    let mut normal = &ht * &hm;
    let mu = 1e-12 * (0..m).map(|i| normal[(i, i)]).sum::<f64>() + 1e-300;
    for i in 0..m {
        normal[(i, i)] += mu;
    }
    let rhs = Mat::from_vec(m, 1, ht.apply(g).into_iter().map(|v| -v).collect());
    match normal.solve(&rhs) {
        Some(d) if d.is_finite() => d.data,
        // Steepest descent on ½‖∇V‖² as a fallback.
        _ => ht.apply(g).into_iter().map(|v| -v).collect(),
    }
}

struct Seed {
    x: Vec<f64>,
    value: f64,
    g: Vec<f64>,
    h: Vec<f64>,
    dir: Vec<f64>,
    alpha: f64,
    done: bool,
    converged: bool,
}

fn half_sq(g: &[f64]) -> f64 {
    0.5 * g.iter().map(|v| v * v).sum::<f64>()
}

/// Descends `½‖∇V‖²` from every seed in `xs` with Armijo backtracking.
fn descend(
    field: &(impl ScalarField + ?Sized),
    domain: &BoxDomain,
    xs: &[f64],
    cfg: &CriticalPointConfig,
) -> Result<Vec<Option<CriticalPoint>>, DiffError> {
    let m = field.dim();
    let (v0, g0, h0) = value_grad_hessian(field, xs)?;
    let mut seeds: Vec<Seed> = (0..xs.len() / m)
        .map(|i| {
            let g = g0[i * m..(i + 1) * m].to_vec();
            let h = h0[i * m * m..(i + 1) * m * m].to_vec();
            let converged = norm(&g) <= cfg.tol;
            Seed {
                x: xs[i * m..(i + 1) * m].to_vec(),
                value: v0[i],
                dir: direction(&g, &h),
                g,
                h,
                alpha: 1.0,
                done: converged,
                converged,
            }
        })
        .collect();
    let lo: Vec<f64> = (0..m).map(|i| domain.lo[i] + 1e-9 * (domain.hi[i] - domain.lo[i])).collect();
    let hi: Vec<f64> = (0..m).map(|i| domain.hi[i] - 1e-9 * (domain.hi[i] - domain.lo[i])).collect();

    for _ in 0..cfg.max_iter {
        let active: Vec<usize> = (0..seeds.len()).filter(|&i| !seeds[i].done).collect();
        if active.is_empty() {
            break;
        }
        let mut trial = Vec::with_capacity(active.len() * m);
        for &i in &active {
            let s = &seeds[i];
            for k in 0..m {
                trial.push((s.x[k] + s.alpha * s.dir[k]).clamp(lo[k], hi[k]));
            }
        }
        let (tv, tg, th) = value_grad_hessian(field, &trial)?;
        for (a, &i) in active.iter().enumerate() {
            let s = &mut seeds[i];
            let xt = &trial[a * m..(a + 1) * m];
            let gt = &tg[a * m..(a + 1) * m];
            // ∇(½‖g‖²) = Hᵀg.
            let slope: f64 = (0..m)
                .map(|k| {
                    let grad_phi: f64 = (0..m).map(|j| s.h[j * m + k] * s.g[j]).sum();
                    grad_phi * (xt[k] - s.x[k])
                })
                .sum();
            if slope < 0.0 && half_sq(gt) <= half_sq(&s.g) + ARMIJO_C * slope {
                s.x.copy_from_slice(xt);
                s.value = tv[a];
                s.g.copy_from_slice(gt);
                s.h.copy_from_slice(&th[a * m * m..(a + 1) * m * m]);
                s.dir = direction(&s.g, &s.h);
                s.alpha = 1.0;
                if norm(&s.g) <= cfg.tol {
                    s.done = true;
                    s.converged = true;
                }
            } else {
                s.alpha *= 0.5;
                if s.alpha < MIN_STEP {
                    s.done = true;
                }
            }
        }
    }
    Ok(seeds
        .into_iter()
        .map(|s| {
            s.converged.then(|| CriticalPoint {
                distance_to_origin: norm(&s.x),
                grad_norm: norm(&s.g),
                value: s.value,
                location: s.x,
            })
        })
        .collect())
}

/// Smallest `‖∇V‖` over the centres of a `res^m` grid, skipping the ball of
/// radius `exclusion` around the origin. Infinite when every cell is skipped.
pub fn grid_min_gradnorm(
    field: &(impl ScalarField + ?Sized),
    domain: &BoxDomain,
    res: usize,
    exclusion: f64,
) -> Result<f64, DiffError> {
    let m = field.dim();
    let xs = cell_centers(domain, res);
    let parts = map_chunks(xs.len() / m, 1024, |r| -> Result<f64, DiffError> {
        let chunk = &xs[r.start * m..r.end * m];
        let (_, g) = field.values_and_grads(chunk)?;
        Ok(chunk
            .chunks_exact(m)
            .zip(g.chunks_exact(m))
            .filter(|(x, _)| norm(x) >= exclusion)
            .map(|(_, g)| norm(g))
            .fold(f64::INFINITY, f64::min))
    });
    let mut best = f64::INFINITY;
    for p in parts {
        best = best.min(p?);
    }
    Ok(best)
}

/// Locates points with `∇V = 0` in the box.
///
/// Every cell centre seeds a damped Gauss–Newton descent on `½‖∇V‖²` with
/// Armijo backtracking. Seeds that reach `‖∇V‖ ≤ tol` are merged greedily in
/// seed order: a point closer than `merge_radius` to an earlier one is dropped.
pub fn find_critical_points(
    field: &(impl ScalarField + ?Sized),
    domain: &BoxDomain,
    cfg: &CriticalPointConfig,
) -> Result<CriticalPointReport, DiffError> {
    let m = field.dim();
    if domain.dim() != m {
        return Err(DiffError::DimensionMismatch { context: "search box".into(), expected: m, found: domain.dim() });
    }
    if cfg.grid_res < 8 {
        return Err(DiffError::Malformed(format!("grid resolution {} is below 8", cfg.grid_res)));
    }
    let xs = cell_centers(domain, cfg.grid_res);
    let seeds = xs.len() / m;
    let parts = map_chunks(seeds, SEED_CHUNK, |r| descend(field, domain, &xs[r.start * m..r.end * m], cfg));
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut converged_seeds = 0;
    for part in parts {
        for p in part?.into_iter().flatten() {
            converged_seeds += 1;
            let far = points.iter().all(|q| {
                let d: f64 = q.location.iter().zip(&p.location).map(|(a, b)| (a - b) * (a - b)).sum();
                d.sqrt() >= cfg.merge_radius
            });
            if far {
                points.push(p);
            }
        }
    }
    let grid_min = grid_min_gradnorm(field, domain, cfg.grid_res, cfg.exclusion_radius)?;
    Ok(CriticalPointReport {
        points,
        grid_min_gradnorm_outside_ball: grid_min,
        seeds,
        converged_seeds,
        config: cfg.clone(),
    })
}
