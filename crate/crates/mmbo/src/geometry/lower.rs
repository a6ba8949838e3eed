use nalgebra::DVector;

use super::ConvexSet;
use crate::error::{check_dim, MmboError, Result};
use crate::model::MinimaxBilevelProblem;

const MAX_APG_ITERS: usize = 200_000;

/// A minimizer of `g(·, λ)` over `𝒴` and the attained value.
#[derive(Debug, Clone)]
pub struct LowerLevelSolution {
    pub z: DVector<f64>,
    pub value: f64,
    /// Gradient-mapping norm at `z` (zero for exact linear solves).
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `min_{z ∈ 𝒴} g(z, λ)`.
///
/// Affine `g(·, λ)` is minimized exactly: by the sign rule over a box, by simplex over a
/// polyhedron. Otherwise accelerated projected gradient with step `1/L_g` and function-value
/// restart runs until the gradient-mapping norm is at most `tol`.
pub fn lower_level_solve(
    problem: &MinimaxBilevelProblem,
    lambda: &DVector<f64>,
    tol: f64,
) -> Result<LowerLevelSolution> {
    check_dim("lambda", problem.dims.dl, lambda.len())?;
    if !(tol > 0.0) {
        return Err(MmboError::InvalidParameter(
            "lower-level tolerance must be positive".into(),
        ));
    }
    if let Some(coeff) = problem.g.linear_coefficient(lambda) {
        let (z, _) = problem.set_y.linear_min(&coeff)?;
        let value = problem.g.value(&z, lambda);
        return Ok(LowerLevelSolution {
            z,
            value,
            residual: 0.0,
            iterations: 1,
        });
    }
    accelerated_projected_gradient(problem, &problem.set_y, lambda, tol)
}

fn accelerated_projected_gradient(
    problem: &MinimaxBilevelProblem,
    set: &ConvexSet,
    lambda: &DVector<f64>,
    tol: f64,
) -> Result<LowerLevelSolution> {
    let g = &problem.g;
    let lg = g.lipschitz_grad().max(1e-12);
    let step = 1.0 / lg;
    let start = DVector::zeros(problem.dims.dy);
    let mut z = set.project(&start)?;
    let mut z_prev = z.clone();
    let mut fz = g.value(&z, lambda);
    let mut t = 1.0_f64;
    let mut residual = f64::INFINITY;
    for it in 0..MAX_APG_ITERS {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = &z + (&z - &z_prev) * ((t - 1.0) / t_next);
        let (gw, _) = g.gradient(&w, lambda);
        let z_next = set.project(&(&w - &gw * step))?;
        let f_next = g.value(&z_next, lambda);
        if f_next > fz {
            // Function-value restart: keep the new point, drop the momentum.
            t = 1.0;
            z_prev = z_next.clone();
        } else {
            t = t_next;
            z_prev = z;
        }
        z = z_next;
        fz = f_next;
        let (gz, _) = g.gradient(&z, lambda);
        let mapped = set.project(&(&z - &gz * step))?;
        residual = (&z - &mapped).norm() / step;
        if residual <= tol {
            return Ok(LowerLevelSolution {
                value: g.value(&z, lambda),
                z,
                residual,
                iterations: it + 1,
            });
        }
    }
    Err(MmboError::NoConvergence {
        what: "lower-level accelerated projected gradient",
        iterations: MAX_APG_ITERS,
        residual,
    })
}
