use nalgebra::{DMatrix, DVector};

use super::Polyhedron;
use super::ProjectionSettings;
use crate::error::{MmboError, Result};

/// Closed-form projection onto `{v : H v = h}` through a thin QR factorization of `Hᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct AffineProjector {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    h: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl AffineProjector {
    pub(crate) fn new(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<Self> {
        if h.nrows() > h.ncols() {
            return Err(MmboError::InvalidParameter(format!(
                "equality block has {} rows for {} variables",
                h.nrows(),
                h.ncols()
            )));
        }
        let qr = h.transpose().qr();
        let q = qr.q();
        let r = qr.r();
        let scale = r.diagonal().amax().max(1.0);
        if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
            return Err(MmboError::InvalidParameter(
                "equality block is rank deficient".into(),
            ));
        }
        Ok(Self {
            q,
            r,
            h: h.clone(),
            rhs: rhs.clone(),
        })
    }

    /// `v - Hᵀ (H Hᵀ)⁻¹ (H v - h)`, computed as `v - Q R⁻ᵀ (H v - h)`.
    pub(crate) fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let resid = &self.h * v - &self.rhs;
        let w = self
            .r
            .transpose()
            .solve_lower_triangular(&resid)
            .expect("R has a nonzero diagonal");
        v - &self.q * w
    }
}

/// Dykstra's algorithm over the factors: each inequality half-space, the affine block, the box.
pub(crate) fn project(
    p: &Polyhedron,
    v: &DVector<f64>,
    settings: &ProjectionSettings,
) -> Result<DVector<f64>> {
    if settings.max_sweeps == 0 || settings.tol <= 0.0 {
        return Err(MmboError::InvalidParameter(
            "projection needs max_sweeps >= 1 and tol > 0".into(),
        ));
    }
    let affine = match &p.affine {
        Some(Ok(a)) => Some(a),
        Some(Err(msg)) => return Err(MmboError::InvalidParameter(msg.clone())),
        None => None,
    };
    let n = v.len();
    let m = p.h1.nrows();
    let row_norms: Vec<f64> = (0..m).map(|r| p.h1.row(r).norm_squared()).collect();
    let n_factors = m + 2;
    let mut increments = vec![DVector::<f64>::zeros(n); n_factors];
    let mut x = v.clone();

    if p.violation(&x) <= settings.tol {
        return Ok(x);
    }

    let mut residual = f64::INFINITY;
    for _ in 0..settings.max_sweeps {
        let start = x.clone();
        for (r, norm_sq) in row_norms.iter().enumerate() {
            let y = &x + &increments[r];
            let a = p.h1.row(r).transpose();
            let excess = a.dot(&y) - p.b1[r];
            let proj = if excess > 0.0 && *norm_sq > 0.0 {
                &y - a * (excess / norm_sq)
            } else {
                y.clone()
            };
            increments[r] = &y - &proj;
            x = proj;
        }
        if let Some(aff) = affine {
            let y = &x + &increments[m];
            let proj = aff.project(&y);
            increments[m] = &y - &proj;
            x = proj;
        }
        {
            let y = &x + &increments[m + 1];
            let proj = p.bounds.project(&y);
            increments[m + 1] = &y - &proj;
            x = proj;
        }
        let change = (&x - &start).amax();
        residual = p.violation(&x).max(change);
        if residual <= settings.tol {
            return Ok(x);
        }
    }
    Err(MmboError::NoConvergence {
        what: "Dykstra projection",
        iterations: settings.max_sweeps,
        residual,
    })
}
