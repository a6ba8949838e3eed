//! Projected-gradient gaps, ε-KKT certification, the hypergradient residual, and residual
//! checks for the strong, Mordukhovich, Clarke and weak multiplier systems of the
//! complementarity reformulation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, MmboError, Result};
use crate::geometry::lower_level_solve;
use crate::model::MinimaxBilevelProblem;
use crate::penalty::{p_rho_grads, PenaltyParams};

/// A primal point `(x, y, λ, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    pub z: Vec<f64>,
}

impl PrimalPoint {
    pub fn new(
        x: &DVector<f64>,
        y: &DVector<f64>,
        lambda: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Self {
        Self {
            x: x.iter().copied().collect(),
            y: y.iter().copied().collect(),
            lambda: lambda.iter().copied().collect(),
            z: z.iter().copied().collect(),
        }
    }

    pub fn vectors(&self) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            DVector::from_vec(self.x.clone()),
            DVector::from_vec(self.y.clone()),
            DVector::from_vec(self.lambda.clone()),
            DVector::from_vec(self.z.clone()),
        )
    }
}

/// Scales `(L_x, L_y, L_λ, L_z)` of the four gradient mappings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapScales {
    pub lx: f64,
    pub ly: f64,
    pub ll: f64,
    pub lz: f64,
}

impl GapScales {
    /// `(1/α_x, τ, τ, 1/α_x)`.
    pub fn from_params(params: &PenaltyParams) -> Self {
        Self {
            lx: 1.0 / params.alpha_x,
            ly: params.tau,
            ll: params.tau,
            lz: 1.0 / params.alpha_x,
        }
    }
}

/// The four projected-gradient residuals of `P_ρ`.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub gap_x: DVector<f64>,
    pub gap_y: DVector<f64>,
    pub gap_lambda: DVector<f64>,
    pub gap_z: DVector<f64>,
    pub scales: GapScales,
}

impl GapReport {
    /// `(‖G_x‖, ‖G_y‖, ‖G_λ‖, ‖G_z‖)`.
    pub fn norms(&self) -> [f64; 4] {
        [
            self.gap_x.norm(),
            self.gap_y.norm(),
            self.gap_lambda.norm(),
            self.gap_z.norm(),
        ]
    }

    /// Sum of the four gap norms.
    pub fn sum_of_norms(&self) -> f64 {
        self.norms().iter().sum()
    }
}

/// `L_x(x − proj_𝒳(x − ∇_x P/L_x))`, `L_y(y − proj_𝒴(y + ∇_y P/L_y))`,
/// `L_λ(λ − proj_Λ(λ + ∇_λ P/L_λ))`, `L_z(z − proj_𝒴(z − ∇_z P/L_z))`.
pub fn gap_measures(
    problem: &MinimaxBilevelProblem,
    rho: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    z: &DVector<f64>,
    scales: &GapScales,
) -> Result<GapReport> {
    for s in [scales.lx, scales.ly, scales.ll, scales.lz] {
        if !(s > 0.0 && s.is_finite()) {
            return Err(MmboError::InvalidParameter(format!(
                "gap scale must be positive, got {s}"
            )));
        }
    }
    let g = p_rho_grads(problem, rho, x, y, lambda, z)?;
    let gap = |p: &DVector<f64>,
               grad: &DVector<f64>,
               sign: f64,
               scale: f64,
               set: &crate::geometry::ConvexSet|
     -> Result<DVector<f64>> {
        let moved = set.project(&(p + grad * (sign / scale)))?;
        Ok((p - moved) * scale)
    };
    Ok(GapReport {
        gap_x: gap(x, &g.x, -1.0, scales.lx, &problem.set_x)?,
        gap_y: gap(y, &g.y, 1.0, scales.ly, &problem.set_y)?,
        gap_lambda: gap(lambda, &g.lambda, 1.0, scales.ll, &problem.set_lambda)?,
        gap_z: gap(z, &g.z, -1.0, scales.lz, &problem.set_y)?,
        scales: *scales,
    })
}

/// Norm of the stacked four gap vectors.
pub fn composite_error(report: &GapReport) -> f64 {
    report.norms().iter().map(|n| n * n).sum::<f64>().sqrt()
}

/// Gaps plus the lower-level optimality gap with the ε-KKT verdict.
#[derive(Debug, Clone)]
pub struct KktReport {
    pub gaps: GapReport,
    /// `g(y, λ) − min_z g(z, λ)`.
    pub lower_gap: f64,
    pub epsilon: f64,
    pub verdict: bool,
}

impl KktReport {
    pub fn to_json(&self) -> serde_json::Value {
        let n = self.gaps.norms();
        serde_json::json!({
            "gap_x": n[0],
            "gap_y": n[1],
            "gap_lambda": n[2],
            "gap_z": n[3],
            "error": composite_error(&self.gaps),
            "lower_gap": self.lower_gap,
            "epsilon": self.epsilon,
            "eps_kkt": self.verdict,
        })
    }
}

/// Certifies `(x, y, λ, z)` as an ε-KKT point: every gap norm and the lower-level gap at most ε.
pub fn check_eps_kkt(
    problem: &MinimaxBilevelProblem,
    rho: f64,
    point: &PrimalPoint,
    epsilon: f64,
    scales: &GapScales,
) -> Result<KktReport> {
    if !(epsilon > 0.0) {
        return Err(MmboError::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let (x, y, l, z) = point.vectors();
    let gaps = gap_measures(problem, rho, &x, &y, &l, &z, scales)?;
    let lower = lower_level_solve(problem, &l, epsilon / 10.0)?;
    let lower_gap = problem.eval_g(&y, &l)? - lower.value;
    let verdict = gaps.norms().iter().all(|n| *n <= epsilon) && lower_gap <= epsilon;
    Ok(KktReport {
        gaps,
        lower_gap,
        epsilon,
        verdict,
    })
}

/// Partition of lower-level inequality indices at `(ȳ, μ̄^l)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSets {
    /// Active with positive multiplier.
    pub alpha: Vec<usize>,
    /// Active with zero multiplier.
    pub beta: Vec<usize>,
    /// Inactive with zero multiplier.
    pub gamma: Vec<usize>,
}

/// Tolerance for activity and multiplier positivity.
pub const INDEX_TOL: f64 = 1e-8;

/// Classifies each constraint by `(g_y(ȳ)_i, μ^l_i)`; infeasible constraints, negative
/// multipliers and inactive constraints with positive multipliers are errors.
pub fn index_sets(gy_values: &DVector<f64>, mu_l: &DVector<f64>, tol: f64) -> Result<IndexSets> {
    check_dim("lower-level multiplier", gy_values.len(), mu_l.len())?;
    let mut sets = IndexSets::default();
    for i in 0..gy_values.len() {
        let (g, m) = (gy_values[i], mu_l[i]);
        if g > tol {
            return Err(MmboError::Classification(format!(
                "constraint {i} violated: g = {g:.3e}"
            )));
        }
        if m < -tol {
            return Err(MmboError::Classification(format!(
                "multiplier {i} negative: mu = {m:.3e}"
            )));
        }
        let active = g >= -tol;
        let positive = m > tol;
        match (active, positive) {
            (true, true) => sets.alpha.push(i),
            (true, false) => sets.beta.push(i),
            (false, false) => sets.gamma.push(i),
            (false, true) => {
                return Err(MmboError::Classification(format!(
                    "complementarity violated at {i}: g = {g:.3e}, mu = {m:.3e}"
                )))
            }
        }
    }
    Ok(sets)
}

/// Affine constraints `G v − r <= 0`.
#[derive(Debug, Clone)]
pub struct AffineConstraints {
    pub g: DMatrix<f64>,
    pub r: DVector<f64>,
}

impl AffineConstraints {
    pub fn eval(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.g * v - &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// The complementarity reformulation's constraint functions `g_x`, `g_y`, `g_λ`, taken from
/// the problem's sets in inequality form.
#[derive(Debug)]
pub struct MpccForm<'a> {
    pub problem: &'a MinimaxBilevelProblem,
    pub gx: AffineConstraints,
    pub gy: AffineConstraints,
    pub gl: AffineConstraints,
}

impl<'a> MpccForm<'a> {
    pub fn from_problem(problem: &'a MinimaxBilevelProblem) -> Self {
        let conv = |s: &crate::geometry::ConvexSet| {
            let (g, r) = s.inequality_form();
            AffineConstraints { g, r }
        };
        Self {
            problem,
            gx: conv(&problem.set_x),
            gy: conv(&problem.set_y),
            gl: conv(&problem.set_lambda),
        }
    }
}

/// Multipliers `(μ^x, μ^y, μ^λ, μ^m, μ^h, μ^c)` and the lower-level multiplier `μ^l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpccCertificate {
    pub mu_x: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub mu_lambda: Vec<f64>,
    pub mu_m: Vec<f64>,
    pub mu_h: Vec<f64>,
    pub mu_c: f64,
    pub mu_l: Vec<f64>,
}

impl MpccCertificate {
    /// All multipliers zero, sized for `form`.
    pub fn zeros(form: &MpccForm) -> Self {
        let qy = form.gy.len();
        Self {
            mu_x: vec![0.0; form.gx.len()],
            mu_y: vec![0.0; qy],
            mu_lambda: vec![0.0; form.gl.len()],
            mu_m: vec![0.0; qy],
            mu_h: vec![0.0; form.problem.dims.dy],
            mu_c: 0.0,
            mu_l: vec![0.0; qy],
        }
    }
}

/// Stationarity tiers, strongest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationarityKind {
    S,
    M,
    C,
    W,
}

/// Per-condition residuals of a multiplier system.
#[derive(Debug, Clone, Serialize)]
pub struct MpccReport {
    pub kind: StationarityKind,
    pub conditions: Vec<(String, f64)>,
    pub max_residual: f64,
}

impl MpccReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

fn pos(v: f64) -> f64 {
    v.max(0.0)
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

/// Sign residual `max_i (−v_i)⁺`.
fn neg_part(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| pos(-x)).fold(0.0, f64::max)
}

/// Complementarity residual `max_i |c_i v_i|` for constraint values `c <= 0` and multipliers `v`.
fn comp(c: &DVector<f64>, v: &DVector<f64>) -> f64 {
    c.iter()
        .zip(v.iter())
        .map(|(a, b)| (a * b).abs())
        .fold(0.0, f64::max)
}

/// Evaluates every condition of the chosen multiplier system at `(x̄, ȳ, λ̄)` with the
/// certificate's `μ̄^l`. Residuals are sup-norms for equations, negative parts for signs, and
/// distances to the admissible sign pattern for the conditions on the biactive set β:
/// for C the distance to `{μ^y μ^m >= 0}`, for M the distance to
/// `{μ^y > 0, μ^m > 0} ∪ {μ^y μ^m = 0}`. Residuals are therefore ordered `S >= M >= C >= W`.
pub fn mpcc_residual(
    form: &MpccForm,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    cert: &MpccCertificate,
    kind: StationarityKind,
) -> Result<MpccReport> {
    let problem = form.problem;
    let so = problem
        .g
        .second_order()
        .ok_or(MmboError::MissingSecondOrder)?;
    let qy = form.gy.len();
    check_dim("mu_x", form.gx.len(), cert.mu_x.len())?;
    check_dim("mu_y", qy, cert.mu_y.len())?;
    check_dim("mu_lambda", form.gl.len(), cert.mu_lambda.len())?;
    check_dim("mu_m", qy, cert.mu_m.len())?;
    check_dim("mu_h", problem.dims.dy, cert.mu_h.len())?;
    check_dim("mu_l", qy, cert.mu_l.len())?;
    let mu_x = DVector::from_vec(cert.mu_x.clone());
    let mu_y = DVector::from_vec(cert.mu_y.clone());
    let mu_lam = DVector::from_vec(cert.mu_lambda.clone());
    let mu_m = DVector::from_vec(cert.mu_m.clone());
    let mu_h = DVector::from_vec(cert.mu_h.clone());
    let mu_l = DVector::from_vec(cert.mu_l.clone());
    let mu_c = cert.mu_c;

    let (fx, fy, fl) = problem.eval_f_grads(x, y, lambda)?;
    let (gy_grad, _) = problem.eval_g_grads(y, lambda)?;
    let h_yy = so.hess_yy(y, lambda);
    let h_ly = so.hess_lambda_y(y, lambda);
    let jx = &form.gx.g;
    let jy = &form.gy.g;
    let jl = &form.gl.g;
    let gx_val = form.gx.eval(x);
    let gy_val = form.gy.eval(y);
    let gl_val = form.gl.eval(lambda);

    let sets = index_sets(&gy_val, &mu_l, INDEX_TOL)?;

    let mut conditions: Vec<(String, f64)> = Vec::new();
    let mut push = |name: &str, v: f64| conditions.push((name.to_string(), v));

    push("stationarity_x", inf_norm(&(&fx + jx.tr_mul(&mu_x))));
    // The constraints are affine, so the μ^l-weighted constraint Hessians vanish.
    let ry = &fy - jy.tr_mul(&mu_y) - &h_yy * &mu_h - jy.tr_mul(&mu_l) * mu_c;
    push("stationarity_y", inf_norm(&ry));
    push(
        "stationarity_lambda",
        inf_norm(&(&fl - jl.tr_mul(&mu_lam) - &h_ly * &mu_h)),
    );
    push(
        "multiplier_m",
        inf_norm(&(&mu_m - jy * &mu_h - &gy_val * mu_c)),
    );
    push(
        "lower_stationarity",
        inf_norm(&(&gy_grad + jy.tr_mul(&mu_l))),
    );
    push(
        "feasibility_x",
        pos(gx_val.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    );
    push(
        "feasibility_lambda",
        pos(gl_val.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    );
    push("sign_mu_x", neg_part(&mu_x));
    push("complementarity_x", comp(&gx_val, &mu_x));
    push("sign_mu_lambda", neg_part(&mu_lam));
    push("complementarity_lambda", comp(&gl_val, &mu_lam));

    let mu_y_gamma = sets
        .gamma
        .iter()
        .map(|&i| mu_y[i].abs())
        .fold(0.0, f64::max);
    let mu_m_alpha = sets
        .alpha
        .iter()
        .map(|&i| mu_m[i].abs())
        .fold(0.0, f64::max);
    push("mu_y_gamma_zero", mu_y_gamma);
    push("mu_m_alpha_zero", mu_m_alpha);

    let sign_dist = |a: f64, b: f64| a.abs().min(b.abs());
    match kind {
        StationarityKind::S => {
            push("sign_mu_y", neg_part(&mu_y));
            push("sign_mu_m", neg_part(&mu_m));
            push("complementarity_y", comp(&gy_val, &mu_y));
            push("complementarity_m", comp(&mu_l, &mu_m));
        }
        StationarityKind::M => {
            let r = sets
                .beta
                .iter()
                .map(|&i| {
                    let (a, b) = (mu_y[i], mu_m[i]);
                    if a > 0.0 && b > 0.0 {
                        0.0
                    } else {
                        sign_dist(a, b)
                    }
                })
                .fold(0.0, f64::max);
            push("beta_mordukhovich", r);
        }
        StationarityKind::C => {
            let r = sets
                .beta
                .iter()
                .map(|&i| {
                    let (a, b) = (mu_y[i], mu_m[i]);
                    if a * b >= 0.0 {
                        0.0
                    } else {
                        sign_dist(a, b)
                    }
                })
                .fold(0.0, f64::max);
            push("beta_clarke", r);
        }
        StationarityKind::W => {}
    }
    let max_residual = conditions.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(MpccReport {
        kind,
        conditions,
        max_residual,
    })
}

/// Hypergradient residuals at `(x, ȳ(λ), λ)`.
#[derive(Debug, Clone)]
pub struct HResidual {
    /// `‖∇_x f‖`
    pub r_x: f64,
    /// `‖∇_λ f − ∇²_λy g [∇²_yy g]⁻¹ ∇_y f‖`
    pub r_lambda: f64,
    pub y_bar: DVector<f64>,
    /// True when `x`, `ȳ` or `λ` touches a set boundary, where the unconstrained formula is
    /// only indicative.
    pub boundary_contact: bool,
}

/// Computes `ȳ(λ) = argmin_z g(z, λ)` and the two hypergradient residuals.
pub fn h_residual(
    problem: &MinimaxBilevelProblem,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    tol: f64,
) -> Result<HResidual> {
    let so = problem
        .g
        .second_order()
        .ok_or(MmboError::MissingSecondOrder)?;
    let lower = lower_level_solve(problem, lambda, tol)?;
    let y_bar = lower.z;
    let (fx, fy, fl) = problem.eval_f_grads(x, &y_bar, lambda)?;
    let h_yy = so.hess_yy(&y_bar, lambda);
    let h_ly = so.hess_lambda_y(&y_bar, lambda);
    let min_eig = SymmetricEigen::new(0.5 * (&h_yy + h_yy.transpose()))
        .eigenvalues
        .min();
    let nu = so.strong_convexity().unwrap_or(0.0);
    if !(min_eig > 0.0) || min_eig < 0.5 * nu {
        return Err(MmboError::SingularHessian(min_eig));
    }
    let solve = h_yy
        .clone()
        .cholesky()
        .ok_or(MmboError::SingularHessian(min_eig))?
        .solve(&fy);
    let r_lambda = (&fl - &h_ly * solve).norm();
    let on_boundary = |set: &crate::geometry::ConvexSet, v: &DVector<f64>| {
        let (g, r) = set.inequality_form();
        (&g * v - r).iter().any(|c| *c >= -INDEX_TOL)
    };
    let boundary_contact = on_boundary(&problem.set_x, x)
        || on_boundary(&problem.set_y, &y_bar)
        || on_boundary(&problem.set_lambda, lambda);
    Ok(HResidual {
        r_x: fx.norm(),
        r_lambda,
        y_bar,
        boundary_contact,
    })
}
