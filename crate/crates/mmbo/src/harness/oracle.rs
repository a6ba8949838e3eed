use nalgebra::DVector;
use serde::Serialize;

use crate::error::{MmboError, Result};
use crate::geometry::{lower_level_solve, BoxSet, ConvexSet};
use crate::model::MinimaxBilevelProblem;

/// Largest number of `(x, y, λ)` evaluations [`grid_oracle`] accepts.
pub const MAX_GRID_POINTS: usize = 10_000_000;

/// Brute-force estimate of `Φ* = min_x max_{(y, λ) feasible} f`.
#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub phi_star: f64,
    pub argmin_x: Vec<f64>,
    pub resolution: usize,
    /// Bound on `|phi_star − Φ*|` from gradient bounds and the grid spacing. Exact when the
    /// lower level has a unique solution for every `λ`; for a linear lower level the
    /// feasible `y` are themselves gridded and the bound ignores that discretization.
    pub certified_gap: f64,
    /// Whether `certified_gap` covers every discretization used.
    pub certified: bool,
    pub evaluations: usize,
}

fn grid_points(b: &BoxSet, resolution: usize) -> Result<Vec<DVector<f64>>> {
    if !b.is_bounded() {
        return Err(MmboError::Unbounded(
            "grid oracle needs bounded sets".into(),
        ));
    }
    let n = b.dim();
    let axis = |i: usize| -> Vec<f64> {
        (0..resolution)
            .map(|k| b.lb[i] + (b.ub[i] - b.lb[i]) * k as f64 / (resolution - 1) as f64)
            .collect()
    };
    let axes: Vec<Vec<f64>> = (0..n).map(axis).collect();
    let total = resolution
        .checked_pow(n as u32)
        .filter(|t| *t <= MAX_GRID_POINTS)
        .ok_or_else(|| {
            MmboError::Budget(format!(
                "{resolution}^{n} grid points exceed {MAX_GRID_POINTS}"
            ))
        })?;
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        out.push(DVector::from_fn(n, |i, _| axes[i][idx[i]]));
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < resolution {
                break;
            }
            *slot = 0;
        }
    }
    Ok(out)
}

fn on_set(set: &ConvexSet, pts: Vec<DVector<f64>>, tol: f64) -> Vec<DVector<f64>> {
    pts.into_iter()
        .filter(|p| set.violation(p) <= tol)
        .collect()
}

/// Largest `‖∇f‖` blocks over the corners of the bounding boxes. The gradient of `f` is affine
/// for the quadratic objectives used here, so its norms peak at corners.
fn gradient_bounds(problem: &MinimaxBilevelProblem) -> Result<(f64, f64, f64)> {
    let d = problem.dims;
    let n = d.dx + d.dy + d.dl;
    if n > 20 {
        return Err(MmboError::Budget(
            "gradient bounds enumerate at most 2^20 corners".into(),
        ));
    }
    let (bx, by, bl) = (
        problem.set_x.bounds(),
        problem.set_y.bounds(),
        problem.set_lambda.bounds(),
    );
    let corner = |b: &BoxSet, bits: u64, off: usize| {
        DVector::from_fn(b.dim(), |i, _| {
            if bits >> (off + i) & 1 == 1 {
                b.ub[i]
            } else {
                b.lb[i]
            }
        })
    };
    let mut out = (0.0_f64, 0.0_f64, 0.0_f64);
    for bits in 0u64..(1u64 << n) {
        let x = corner(bx, bits, 0);
        let y = corner(by, bits, d.dx);
        let l = corner(bl, bits, d.dx + d.dy);
        let (gx, gy, gl) = problem.eval_f_grads(&x, &y, &l)?;
        out.0 = out.0.max(gx.norm());
        out.1 = out.1.max(gy.norm());
        out.2 = out.2.max(gl.norm());
    }
    Ok(out)
}

/// Enumerates a grid with `resolution` points per axis on the bounding boxes of `X` and `Λ`
/// (points outside the sets are dropped). For each grid `λ` the lower-level solutions are
/// `argmin_z g(z, λ)` computed by [`lower_level_solve`] when `g(·, λ)` is strongly convex,
/// or else every grid `y` with `g(y, λ) − min g <= feasibility_tol`. `Φ(x)` is the largest
/// `f` over these pairs and the result minimizes `Φ` over the `x` grid.
pub fn grid_oracle(
    problem: &MinimaxBilevelProblem,
    resolution: usize,
    feasibility_tol: f64,
) -> Result<OracleResult> {
    if resolution < 2 {
        return Err(MmboError::InvalidParameter(
            "resolution must be at least 2".into(),
        ));
    }
    if !(feasibility_tol >= 0.0) {
        return Err(MmboError::InvalidParameter(
            "feasibility_tol must be nonnegative".into(),
        ));
    }
    let d = problem.dims;
    let xs = on_set(
        &problem.set_x,
        grid_points(problem.set_x.bounds(), resolution)?,
        1e-12,
    );
    let ls = on_set(
        &problem.set_lambda,
        grid_points(problem.set_lambda.bounds(), resolution)?,
        1e-12,
    );
    if xs.is_empty() || ls.is_empty() {
        return Err(MmboError::Infeasible(
            "no grid point lies in X or Lambda".into(),
        ));
    }
    let nu = problem.g.second_order().and_then(|s| s.strong_convexity());
    let unique = nu.is_some();
    let ys_grid = if unique {
        Vec::new()
    } else {
        on_set(
            &problem.set_y,
            grid_points(problem.set_y.bounds(), resolution)?,
            1e-12,
        )
    };

    // Lower-level solution sets per grid λ.
    let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    for l in &ls {
        let low = lower_level_solve(problem, l, 1e-10)?;
        if unique {
            pairs.push((low.z, l.clone()));
        } else {
            for y in &ys_grid {
                if problem.eval_g(y, l)? - low.value <= feasibility_tol {
                    pairs.push((y.clone(), l.clone()));
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(MmboError::Infeasible(
            "no grid pair satisfies the lower-level tolerance".into(),
        ));
    }
    let evaluations = xs
        .len()
        .checked_mul(pairs.len())
        .filter(|t| *t <= MAX_GRID_POINTS)
        .ok_or_else(|| {
            MmboError::Budget(format!(
                "{} x {} evaluations exceed {MAX_GRID_POINTS}",
                xs.len(),
                pairs.len()
            ))
        })?;

    let mut best = (f64::INFINITY, 0usize);
    for (i, x) in xs.iter().enumerate() {
        let mut phi = f64::NEG_INFINITY;
        for (y, l) in &pairs {
            phi = phi.max(problem.eval_f(x, y, l)?);
        }
        if phi < best.0 {
            best = (phi, i);
        }
    }

    let spacing = |b: &BoxSet| -> f64 {
        let h =
            (0..b.dim()).map(|i| b.ub[i] - b.lb[i]).fold(0.0, f64::max) / (resolution - 1) as f64;
        0.5 * h * (b.dim() as f64).sqrt()
    };
    let (gx, gy, gl) = gradient_bounds(problem)?;
    // Lipschitz constant of λ ↦ argmin_z g(z, λ) is at most ‖∇²_λy g‖ / ν.
    let lip_y = match (nu, problem.g.second_order()) {
        (Some(nu), Some(so)) => {
            let c = so.hess_lambda_y(&DVector::zeros(d.dy), &DVector::zeros(d.dl));
            c.svd(false, false).singular_values.max() / nu
        }
        _ => 0.0,
    };
    let polyhedral = |s: &ConvexSet| matches!(s, ConvexSet::Polyhedron(_));
    let certified = unique && !polyhedral(&problem.set_x) && !polyhedral(&problem.set_lambda);
    let certified_gap = gx * spacing(problem.set_x.bounds())
        + (gl + gy * lip_y) * spacing(problem.set_lambda.bounds());
    Ok(OracleResult {
        phi_star: best.0,
        argmin_x: xs[best.1].iter().copied().collect(),
        resolution,
        certified_gap,
        certified,
        evaluations,
    })
}
