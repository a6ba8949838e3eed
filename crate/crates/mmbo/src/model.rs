//! The problem class: minimize over `x` the worst case over `(y, λ)` of
//! `f(x, y, λ) = f̄(x, y) + λᵀ(A x + B y − c)`, where `y` must minimize `g(·, λ)` over `𝒴`.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, MmboError, Result};
use crate::geometry::ConvexSet;

/// Dimensions of `x`, `y` and `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub dx: usize,
    pub dy: usize,
    pub dl: usize,
}

impl Dims {
    pub fn new(dx: usize, dy: usize, dl: usize) -> Result<Self> {
        if dx == 0 || dy == 0 || dl == 0 {
            return Err(MmboError::InvalidParameter(format!(
                "dimensions must be positive, got ({dx}, {dy}, {dl})"
            )));
        }
        Ok(Self { dx, dy, dl })
    }
}

/// The smooth part `f̄(x, y)` of the upper-level objective.
pub trait UpperObjective: Debug + Send + Sync {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64;
    /// `(∇_x f̄, ∇_y f̄)`.
    fn gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>);
    /// Lipschitz constant of `∇f̄` over `(x, y)`.
    fn lipschitz_grad(&self) -> f64;
}

/// Second derivatives of the lower-level objective.
pub trait SecondOrderOracle {
    /// `∇²_yy g(y, λ)`, shape `dy × dy`.
    fn hess_yy(&self, y: &DVector<f64>, lambda: &DVector<f64>) -> DMatrix<f64>;
    /// `∇²_λy g(y, λ)`, shape `dλ × dy`.
    fn hess_lambda_y(&self, y: &DVector<f64>, lambda: &DVector<f64>) -> DMatrix<f64>;
    /// A lower bound `ν` on the smallest eigenvalue of `∇²_yy g`, when positive.
    fn strong_convexity(&self) -> Option<f64>;
}

/// The lower-level objective `g(z, λ)`, convex in `z` for every fixed `λ`.
pub trait LowerObjective: Debug + Send + Sync {
    fn value(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> f64;
    /// `(∇_z g, ∇_λ g)`.
    fn gradient(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> (DVector<f64>, DVector<f64>);
    /// Lipschitz constant of `∇g` over `(z, λ)`.
    fn lipschitz_grad(&self) -> f64;
    /// When `g(·, λ)` is affine, its slope in `z`. Enables exact lower-level solves.
    fn linear_coefficient(&self, _lambda: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
    fn second_order(&self) -> Option<&dyn SecondOrderOracle> {
        None
    }
}

/// `f̄(x, y) = ½ wᵀ H w + qᵀ w` with `w = (x, y)`.
#[derive(Debug, Clone)]
pub struct QuadraticUpper {
    pub dx: usize,
    pub h: DMatrix<f64>,
    pub q: DVector<f64>,
    lipschitz: f64,
}

impl QuadraticUpper {
    pub fn new(dx: usize, h: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        check_dim("upper Hessian rows", q.len(), h.nrows())?;
        check_dim("upper Hessian columns", q.len(), h.ncols())?;
        if dx > q.len() {
            return Err(MmboError::InvalidParameter(
                "dx exceeds quadratic dimension".into(),
            ));
        }
        let sym = 0.5 * (&h + h.transpose());
        let lipschitz = symmetric_spectral_norm(&sym);
        Ok(Self {
            dx,
            h: sym,
            q,
            lipschitz,
        })
    }

    /// The linear function `c1ᵀ x`.
    pub fn linear(c1: DVector<f64>, dy: usize) -> Self {
        let n = c1.len() + dy;
        let q = DVector::from_fn(n, |i, _| if i < c1.len() { c1[i] } else { 0.0 });
        Self {
            dx: c1.len(),
            h: DMatrix::zeros(n, n),
            q,
            lipschitz: 0.0,
        }
    }

    fn stack(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut w = DVector::zeros(x.len() + y.len());
        w.rows_mut(0, x.len()).copy_from(x);
        w.rows_mut(x.len(), y.len()).copy_from(y);
        w
    }
}

impl UpperObjective for QuadraticUpper {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let w = self.stack(x, y);
        0.5 * w.dot(&(&self.h * &w)) + self.q.dot(&w)
    }

    fn gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let w = self.stack(x, y);
        let g = &self.h * &w + &self.q;
        (
            g.rows(0, self.dx).into_owned(),
            g.rows(self.dx, g.len() - self.dx).into_owned(),
        )
    }

    fn lipschitz_grad(&self) -> f64 {
        self.lipschitz
    }
}

/// `g(z, λ) = ½ zᵀ P z + λᵀ C z + dᵀ z` with `P` positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadraticLower {
    pub p: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
    lipschitz: f64,
    nu: f64,
    is_linear: bool,
}

impl QuadraticLower {
    pub fn new(p: DMatrix<f64>, c: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let dy = d.len();
        check_dim("lower Hessian rows", dy, p.nrows())?;
        check_dim("lower Hessian columns", dy, p.ncols())?;
        check_dim("lower coupling columns", dy, c.ncols())?;
        let p = 0.5 * (&p + p.transpose());
        let eig = SymmetricEigen::new(p.clone());
        let nu = eig.eigenvalues.min();
        if nu < -1e-12 * (1.0 + eig.eigenvalues.amax()) {
            return Err(MmboError::InvalidParameter(format!(
                "lower-level Hessian is not positive semidefinite (eigenvalue {nu:.3e})"
            )));
        }
        let dl = c.nrows();
        let mut full = DMatrix::zeros(dy + dl, dy + dl);
        full.view_mut((0, 0), (dy, dy)).copy_from(&p);
        full.view_mut((dy, 0), (dl, dy)).copy_from(&c);
        full.view_mut((0, dy), (dy, dl)).copy_from(&c.transpose());
        let lipschitz = symmetric_spectral_norm(&full);
        let is_linear = p.iter().all(|v| *v == 0.0);
        Ok(Self {
            p,
            c,
            d,
            lipschitz,
            nu,
            is_linear,
        })
    }

    /// The linear lower level `(d + λ)ᵀ z`.
    pub fn linear(d: DVector<f64>) -> Self {
        let n = d.len();
        Self::new(DMatrix::zeros(n, n), DMatrix::identity(n, n), d).expect("consistent shapes")
    }
}

impl LowerObjective for QuadraticLower {
    fn value(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.p * z)) + lambda.dot(&(&self.c * z)) + self.d.dot(z)
    }

    fn gradient(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.p * z + self.c.tr_mul(lambda) + &self.d, &self.c * z)
    }

    fn lipschitz_grad(&self) -> f64 {
        self.lipschitz
    }

    fn linear_coefficient(&self, lambda: &DVector<f64>) -> Option<DVector<f64>> {
        self.is_linear.then(|| self.c.tr_mul(lambda) + &self.d)
    }

    fn second_order(&self) -> Option<&dyn SecondOrderOracle> {
        Some(self)
    }
}

impl SecondOrderOracle for QuadraticLower {
    fn hess_yy(&self, _y: &DVector<f64>, _lambda: &DVector<f64>) -> DMatrix<f64> {
        self.p.clone()
    }

    fn hess_lambda_y(&self, _y: &DVector<f64>, _lambda: &DVector<f64>) -> DMatrix<f64> {
        self.c.clone()
    }

    fn strong_convexity(&self) -> Option<f64> {
        (self.nu > 0.0).then_some(self.nu)
    }
}

/// Largest absolute eigenvalue of a symmetric matrix.
fn symmetric_spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.amax()
}

/// Largest singular value by power iteration on `AᵀA` from a seeded start vector.
/// Stops after `max_iter` iterations or when the relative change falls below `tol`.
pub fn spectral_norm(a: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    if a.is_empty() || a.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(a.ncols(), |_, _| {
        rand::Rng::random_range(&mut rng, 0.5..1.5)
    });
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let av = a * &v;
        let w = a.tr_mul(&av);
        let wn = w.norm();
        if wn == 0.0 {
            return av.norm();
        }
        v = w / wn;
        let next = (a * &v).norm();
        let change = (next - sigma).abs();
        sigma = next;
        if change <= tol * sigma {
            break;
        }
    }
    sigma
}

/// Power-iteration defaults for `‖A‖₂`, `‖B‖₂`.
pub const POWER_MAX_ITER: usize = 1000;
pub const POWER_TOL: f64 = 1e-13;

/// Smoothness constants at penalty weight `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lipschitz {
    /// `L_∇f = L_∇f̄ + ‖A‖ + ‖B‖`.
    pub lf: f64,
    /// `L_∇g`.
    pub lg: f64,
    /// `L_∇P = L_∇f + 2ρ L_∇g`.
    pub lp: f64,
}

/// Estimated extreme values of `f` and `g` over the feasible sets.
#[derive(Debug, Clone, Copy)]
pub struct BoundEstimates {
    pub f_hi: f64,
    pub f_low: f64,
    pub g_hi: f64,
    pub g_low: f64,
    /// True when every corner of the bounding boxes was enumerated and all sets are boxes, so
    /// the values are exact for objectives whose extrema sit at corners (multilinear objectives,
    /// convex quadratics for the maxima).
    pub corners_exhaustive: bool,
}

/// A minimax bilevel problem with its oracles and feasible sets.
#[derive(Debug, Clone)]
pub struct MinimaxBilevelProblem {
    pub name: String,
    pub dims: Dims,
    pub fbar: Arc<dyn UpperObjective>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub g: Arc<dyn LowerObjective>,
    pub set_x: ConvexSet,
    pub set_y: ConvexSet,
    pub set_lambda: ConvexSet,
    norm_a: f64,
    norm_b: f64,
}

impl MinimaxBilevelProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dims: Dims,
        fbar: Arc<dyn UpperObjective>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DVector<f64>,
        g: Arc<dyn LowerObjective>,
        set_x: ConvexSet,
        set_y: ConvexSet,
        set_lambda: ConvexSet,
    ) -> Result<Self> {
        check_dim("A rows", dims.dl, a.nrows())?;
        check_dim("A columns", dims.dx, a.ncols())?;
        check_dim("B rows", dims.dl, b.nrows())?;
        check_dim("B columns", dims.dy, b.ncols())?;
        check_dim("c", dims.dl, c.len())?;
        check_dim("X dimension", dims.dx, set_x.dim())?;
        check_dim("Y dimension", dims.dy, set_y.dim())?;
        check_dim("Lambda dimension", dims.dl, set_lambda.dim())?;
        let lf = fbar.lipschitz_grad();
        let lg = g.lipschitz_grad();
        if !(lf.is_finite() && lf >= 0.0 && lg.is_finite() && lg >= 0.0) {
            return Err(MmboError::InvalidParameter(
                "oracle Lipschitz constants must be finite and nonnegative".into(),
            ));
        }
        let norm_a = spectral_norm(&a, POWER_MAX_ITER, POWER_TOL);
        let norm_b = spectral_norm(&b, POWER_MAX_ITER, POWER_TOL);
        Ok(Self {
            name: name.into(),
            dims,
            fbar,
            a,
            b,
            c,
            g,
            set_x,
            set_y,
            set_lambda,
            norm_a,
            norm_b,
        })
    }

    fn check_xyl(&self, x: &DVector<f64>, y: &DVector<f64>, l: &DVector<f64>) -> Result<()> {
        check_dim("x", self.dims.dx, x.len())?;
        check_dim("y", self.dims.dy, y.len())?;
        check_dim("lambda", self.dims.dl, l.len())
    }

    /// `Ax + By − c`.
    pub fn coupling(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * y - &self.c
    }

    pub fn eval_f(&self, x: &DVector<f64>, y: &DVector<f64>, l: &DVector<f64>) -> Result<f64> {
        self.check_xyl(x, y, l)?;
        Ok(self.fbar.value(x, y) + l.dot(&self.coupling(x, y)))
    }

    /// `(∇_x f, ∇_y f, ∇_λ f) = (∇_x f̄ + Aᵀλ, ∇_y f̄ + Bᵀλ, Ax + By − c)`.
    pub fn eval_f_grads(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        l: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        self.check_xyl(x, y, l)?;
        let (gx, gy) = self.fbar.gradient(x, y);
        Ok((
            gx + self.a.tr_mul(l),
            gy + self.b.tr_mul(l),
            self.coupling(x, y),
        ))
    }

    pub fn eval_g(&self, z: &DVector<f64>, l: &DVector<f64>) -> Result<f64> {
        check_dim("z", self.dims.dy, z.len())?;
        check_dim("lambda", self.dims.dl, l.len())?;
        Ok(self.g.value(z, l))
    }

    pub fn eval_g_grads(
        &self,
        z: &DVector<f64>,
        l: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        check_dim("z", self.dims.dy, z.len())?;
        check_dim("lambda", self.dims.dl, l.len())?;
        Ok(self.g.gradient(z, l))
    }

    /// Spectral norms `(‖A‖₂, ‖B‖₂)` computed at construction.
    pub fn coupling_norms(&self) -> (f64, f64) {
        (self.norm_a, self.norm_b)
    }

    pub fn lipschitz_constants(&self, rho: f64) -> Result<Lipschitz> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(MmboError::InvalidParameter(format!(
                "rho must be positive, got {rho}"
            )));
        }
        let lf = self.fbar.lipschitz_grad() + self.norm_a + self.norm_b;
        let lg = self.g.lipschitz_grad();
        Ok(Lipschitz {
            lf,
            lg,
            lp: lf + 2.0 * rho * lg,
        })
    }

    /// Extreme values of `f` over `X × Y × Λ` and of `g` over `Y × Λ`, from every bounding-box
    /// corner (up to `2^20` of them, projected onto the sets) plus `n_samples` random feasible points.
    pub fn estimate_bounds(&self, n_samples: usize, seed: u64) -> Result<BoundEstimates> {
        if n_samples == 0 {
            return Err(MmboError::InvalidParameter(
                "n_samples must be at least 1".into(),
            ));
        }
        for (name, s) in [
            ("X", &self.set_x),
            ("Y", &self.set_y),
            ("Lambda", &self.set_lambda),
        ] {
            if !s.is_bounded() {
                return Err(MmboError::Unbounded(format!("set {name} is unbounded")));
            }
        }
        let Dims { dx, dy, dl } = self.dims;
        let mut est = BoundEstimates {
            f_hi: f64::NEG_INFINITY,
            f_low: f64::INFINITY,
            g_hi: f64::NEG_INFINITY,
            g_low: f64::INFINITY,
            corners_exhaustive: false,
        };
        let record =
            |x: &DVector<f64>, y: &DVector<f64>, l: &DVector<f64>, est: &mut BoundEstimates| {
                let f = self.fbar.value(x, y) + l.dot(&self.coupling(x, y));
                let g = self.g.value(y, l);
                est.f_hi = est.f_hi.max(f);
                est.f_low = est.f_low.min(f);
                est.g_hi = est.g_hi.max(g);
                est.g_low = est.g_low.min(g);
            };

        let n = dx + dy + dl;
        let all_boxes = [&self.set_x, &self.set_y, &self.set_lambda]
            .iter()
            .all(|s| matches!(s, ConvexSet::Box(_)));
        if n <= 20 {
            let corner = |set: &ConvexSet, bits: u64, offset: usize| -> Result<DVector<f64>> {
                let b = set.bounds();
                let v = DVector::from_fn(b.dim(), |i, _| {
                    if bits >> (offset + i) & 1 == 1 {
                        b.ub[i]
                    } else {
                        b.lb[i]
                    }
                });
                set.project(&v)
            };
            for bits in 0u64..(1u64 << n) {
                let x = corner(&self.set_x, bits, 0)?;
                let y = corner(&self.set_y, bits, dx)?;
                let l = corner(&self.set_lambda, bits, dx + dy)?;
                record(&x, &y, &l, &mut est);
            }
            est.corners_exhaustive = all_boxes;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_samples {
            let x = self.set_x.sample(&mut rng)?;
            let y = self.set_y.sample(&mut rng)?;
            let l = self.set_lambda.sample(&mut rng)?;
            record(&x, &y, &l, &mut est);
        }
        Ok(est)
    }
}
