//! The penalty function `P_ρ = f − ρ(g(y,λ) − g(z,λ))`, the regularized surrogate
//! `Q = P_ρ − (τ/2)‖(y,λ) − (u,v)‖²`, and the value function `ϑ(x,z,u,v) = max_{y,λ} Q`.

use nalgebra::DVector;

use crate::error::{check_dim, MmboError, Result};
use crate::model::{Lipschitz, MinimaxBilevelProblem};

/// Penalty weight, regularization and step sizes for one penalized problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    pub rho: f64,
    /// Strong-concavity margin of `Q` in `(y, λ)`.
    pub kappa: f64,
    /// Proximal weight `τ >= L_P + κ`.
    pub tau: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
}

impl PenaltyParams {
    /// `τ = 2 L_P`, `κ = L_P`, with the given step sizes.
    pub fn standard(
        problem: &MinimaxBilevelProblem,
        rho: f64,
        alpha_x: f64,
        alpha_y: f64,
    ) -> Result<Self> {
        let lip = problem.lipschitz_constants(rho)?;
        let params = Self {
            rho,
            kappa: lip.lp,
            tau: 2.0 * lip.lp,
            alpha_x,
            alpha_y,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks positivity and finiteness of every field.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho", self.rho),
            ("kappa", self.kappa),
            ("tau", self.tau),
            ("alpha_x", self.alpha_x),
            ("alpha_y", self.alpha_y),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MmboError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Which of `τ >= L_P + κ`, `α_y < 1/(L_P + τ)` and `α_x < 1/L_ϑ` fail. The convergence
    /// guarantees assume all three.
    pub fn theory_violations(&self, problem: &MinimaxBilevelProblem) -> Result<Vec<String>> {
        let lip = problem.lipschitz_constants(self.rho)?;
        let mut out = Vec::new();
        if self.tau < lip.lp + self.kappa {
            out.push(format!(
                "tau {} < L_P + kappa {}",
                self.tau,
                lip.lp + self.kappa
            ));
        }
        let ay_max = 1.0 / (lip.lp + self.tau);
        if self.alpha_y >= ay_max {
            out.push(format!(
                "alpha_y {} >= 1/(L_P + tau) {}",
                self.alpha_y, ay_max
            ));
        }
        let ax_max = 1.0 / l_vartheta(&lip, self.rho, self.tau, self.kappa);
        if self.alpha_x >= ax_max {
            out.push(format!(
                "alpha_x {} >= 1/L_vartheta {}",
                self.alpha_x, ax_max
            ));
        }
        Ok(out)
    }

    /// Errors unless every theoretical step-size condition holds.
    pub fn validate_theory(&self, problem: &MinimaxBilevelProblem) -> Result<()> {
        self.validate()?;
        let v = self.theory_violations(problem)?;
        if v.is_empty() {
            Ok(())
        } else {
            Err(MmboError::InvalidParameter(v.join("; ")))
        }
    }
}

/// `L_ϑ = (L_f + ρ L_g + 2τ)(1 + (L_P + τ)/κ)`.
pub fn l_vartheta(lip: &Lipschitz, rho: f64, tau: f64, kappa: f64) -> f64 {
    (lip.lf + rho * lip.lg + 2.0 * tau) * (1.0 + (lip.lp + tau) / kappa)
}

/// The outer block `(x, z, u, v)` of the surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterPoint {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl OuterPoint {
    pub fn dist(&self, other: &OuterPoint) -> f64 {
        ((&self.x - &other.x).norm_squared()
            + (&self.z - &other.z).norm_squared()
            + (&self.u - &other.u).norm_squared()
            + (&self.v - &other.v).norm_squared())
        .sqrt()
    }
}

/// All six blocks of the surrogate's arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPoint {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl AugmentedPoint {
    pub fn outer(&self) -> OuterPoint {
        OuterPoint {
            x: self.x.clone(),
            z: self.z.clone(),
            u: self.u.clone(),
            v: self.v.clone(),
        }
    }

    fn check(&self, problem: &MinimaxBilevelProblem) -> Result<()> {
        let d = problem.dims;
        check_dim("x", d.dx, self.x.len())?;
        check_dim("z", d.dy, self.z.len())?;
        check_dim("u", d.dy, self.u.len())?;
        check_dim("v", d.dl, self.v.len())?;
        check_dim("y", d.dy, self.y.len())?;
        check_dim("lambda", d.dl, self.lambda.len())
    }
}

/// Partial gradients of `P_ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGrads {
    /// `∇_x f`
    pub x: DVector<f64>,
    /// `∇_y f − ρ ∇_y g(y, λ)`
    pub y: DVector<f64>,
    /// `∇_λ f − ρ (∇_λ g(y, λ) − ∇_λ g(z, λ))`
    pub lambda: DVector<f64>,
    /// `ρ ∇_z g(z, λ)`
    pub z: DVector<f64>,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(MmboError::InvalidParameter(format!(
            "rho must be positive, got {rho}"
        )))
    }
}

pub fn p_rho_value(
    problem: &MinimaxBilevelProblem,
    rho: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<f64> {
    check_rho(rho)?;
    let f = problem.eval_f(x, y, lambda)?;
    let gy = problem.eval_g(y, lambda)?;
    let gz = problem.eval_g(z, lambda)?;
    Ok(f - rho * (gy - gz))
}

pub fn p_rho_grads(
    problem: &MinimaxBilevelProblem,
    rho: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<PenaltyGrads> {
    check_rho(rho)?;
    let (fx, fy, fl) = problem.eval_f_grads(x, y, lambda)?;
    let (gy_y, gy_l) = problem.eval_g_grads(y, lambda)?;
    let (gz_z, gz_l) = problem.eval_g_grads(z, lambda)?;
    Ok(PenaltyGrads {
        x: fx,
        y: fy - gy_y * rho,
        lambda: fl - (gy_l - gz_l) * rho,
        z: gz_z * rho,
    })
}

/// Partial gradients of `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGrads {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    /// `τ (y − u)`
    pub u: DVector<f64>,
    /// `τ (λ − v)`
    pub v: DVector<f64>,
    /// `∇_y P_ρ − τ (y − u)`
    pub y: DVector<f64>,
    /// `∇_λ P_ρ − τ (λ − v)`
    pub lambda: DVector<f64>,
}

pub fn q_value(
    problem: &MinimaxBilevelProblem,
    params: &PenaltyParams,
    pt: &AugmentedPoint,
) -> Result<f64> {
    pt.check(problem)?;
    let p = p_rho_value(problem, params.rho, &pt.x, &pt.y, &pt.lambda, &pt.z)?;
    let dist2 = (&pt.y - &pt.u).norm_squared() + (&pt.lambda - &pt.v).norm_squared();
    Ok(p - 0.5 * params.tau * dist2)
}

pub fn q_grads(
    problem: &MinimaxBilevelProblem,
    params: &PenaltyParams,
    pt: &AugmentedPoint,
) -> Result<SurrogateGrads> {
    pt.check(problem)?;
    let g = p_rho_grads(problem, params.rho, &pt.x, &pt.y, &pt.lambda, &pt.z)?;
    let dy = (&pt.y - &pt.u) * params.tau;
    let dl = (&pt.lambda - &pt.v) * params.tau;
    Ok(SurrogateGrads {
        x: g.x,
        z: g.z,
        y: g.y - &dy,
        lambda: g.lambda - &dl,
        u: dy,
        v: dl,
    })
}

/// The strongly concave inner problem `max_{y ∈ 𝒴, λ ∈ Λ} Q(outer, ·)`.
pub struct InnerProblem<'a> {
    pub problem: &'a MinimaxBilevelProblem,
    pub params: &'a PenaltyParams,
    pub outer: &'a OuterPoint,
}

impl InnerProblem<'_> {
    pub fn value(&self, y: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64> {
        let o = self.outer;
        let p = p_rho_value(self.problem, self.params.rho, &o.x, y, lambda, &o.z)?;
        let dist2 = (y - &o.u).norm_squared() + (lambda - &o.v).norm_squared();
        Ok(p - 0.5 * self.params.tau * dist2)
    }

    /// `(∇_y Q, ∇_λ Q)`.
    pub fn gradient(
        &self,
        y: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let o = self.outer;
        let g = p_rho_grads(self.problem, self.params.rho, &o.x, y, lambda, &o.z)?;
        let tau = self.params.tau;
        Ok((g.y - (y - &o.u) * tau, g.lambda - (lambda - &o.v) * tau))
    }

    /// One projected ascent step of length `step` from `(y, λ)`.
    pub fn ascent_step(
        &self,
        y: &DVector<f64>,
        lambda: &DVector<f64>,
        step: f64,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let (gy, gl) = self.gradient(y, lambda)?;
        let y_next = self.problem.set_y.project(&(y + gy * step))?;
        let l_next = self.problem.set_lambda.project(&(lambda + gl * step))?;
        Ok((y_next, l_next))
    }

    /// Gradient-mapping norm `‖(w − proj(w + ∇Q/L)) L‖` with `L = L_P + τ`.
    pub fn gradient_mapping(&self, y: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64> {
        let big_l = self.smoothness()?;
        let (y1, l1) = self.ascent_step(y, lambda, 1.0 / big_l)?;
        Ok(big_l * ((y - y1).norm_squared() + (lambda - l1).norm_squared()).sqrt())
    }

    /// `L_P + τ`, the smoothness constant of `Q` in `(y, λ)`.
    pub fn smoothness(&self) -> Result<f64> {
        Ok(self.problem.lipschitz_constants(self.params.rho)?.lp + self.params.tau)
    }
}

/// The value function at an outer point together with its maximizer.
#[derive(Debug, Clone)]
pub struct VarthetaEval {
    pub value: f64,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Gradient-mapping norm at the returned maximizer.
    pub residual: f64,
    pub iterations: usize,
}

/// Iteration cap for [`vartheta`].
pub const VARTHETA_MAX_ITERS: usize = 1_000_000;

/// Evaluates `ϑ` by accelerated projected ascent with step `1/(L_P + τ)` until the inner
/// gradient mapping is at most `inner_tol`. Starts from `(u, v)` projected onto the sets.
pub fn vartheta(
    problem: &MinimaxBilevelProblem,
    params: &PenaltyParams,
    outer: &OuterPoint,
    inner_tol: f64,
) -> Result<VarthetaEval> {
    let y0 = problem.set_y.project(&outer.u)?;
    let l0 = problem.set_lambda.project(&outer.v)?;
    vartheta_from(problem, params, outer, inner_tol, y0, l0)
}

/// [`vartheta`] with an explicit starting point for the inner ascent.
pub fn vartheta_from(
    problem: &MinimaxBilevelProblem,
    params: &PenaltyParams,
    outer: &OuterPoint,
    inner_tol: f64,
    y0: DVector<f64>,
    l0: DVector<f64>,
) -> Result<VarthetaEval> {
    params.validate()?;
    let lip = problem.lipschitz_constants(params.rho)?;
    if params.tau < lip.lp + params.kappa {
        return Err(MmboError::InvalidParameter(format!(
            "vartheta needs tau >= L_P + kappa ({} < {})",
            params.tau,
            lip.lp + params.kappa
        )));
    }
    if !(inner_tol > 0.0) {
        return Err(MmboError::InvalidParameter(
            "inner_tol must be positive".into(),
        ));
    }
    let inner = InnerProblem {
        problem,
        params,
        outer,
    };
    let big_l = lip.lp + params.tau;
    let step = 1.0 / big_l;
    let q = (params.kappa / big_l).sqrt();
    let theta = (1.0 - q) / (1.0 + q);

    let (mut y, mut l) = (y0, l0);
    let (mut ya, mut la) = (y.clone(), l.clone());
    let mut residual = inner.gradient_mapping(&y, &l)?;
    let mut iterations = 0;
    while residual > inner_tol {
        if iterations >= VARTHETA_MAX_ITERS {
            return Err(MmboError::NoConvergence {
                what: "inner maximization of Q",
                iterations,
                residual,
            });
        }
        let (y_next, l_next) = inner.ascent_step(&ya, &la, step)?;
        ya = &y_next + (&y_next - &y) * theta;
        la = &l_next + (&l_next - &l) * theta;
        y = y_next;
        l = l_next;
        iterations += 1;
        residual = inner.gradient_mapping(&y, &l)?;
    }
    let value = inner.value(&y, &l)?;
    Ok(VarthetaEval {
        value,
        y,
        lambda: l,
        residual,
        iterations,
    })
}

/// Gradient of `ϑ` over `(x, z, u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarthetaGrad {
    /// `∇_x f(x, y*, λ*)`
    pub x: DVector<f64>,
    /// `ρ ∇_z g(z, λ*)`
    pub z: DVector<f64>,
    /// `τ (y* − u)`
    pub u: DVector<f64>,
    /// `τ (λ* − v)`
    pub v: DVector<f64>,
}

impl VarthetaGrad {
    pub fn stacked(&self) -> DVector<f64> {
        let parts = [&self.x, &self.z, &self.u, &self.v];
        let n = parts.iter().map(|p| p.len()).sum();
        let mut out = DVector::zeros(n);
        let mut at = 0;
        for p in parts {
            out.rows_mut(at, p.len()).copy_from(p);
            at += p.len();
        }
        out
    }
}

/// Danskin gradient of `ϑ` at `outer` given the inner maximizer `(y*, λ*)`. Fails when the
/// maximizer's gradient mapping exceeds `10 · inner_tol`.
pub fn vartheta_grad(
    problem: &MinimaxBilevelProblem,
    params: &PenaltyParams,
    outer: &OuterPoint,
    y_star: &DVector<f64>,
    lambda_star: &DVector<f64>,
    inner_tol: f64,
) -> Result<VarthetaGrad> {
    let inner = InnerProblem {
        problem,
        params,
        outer,
    };
    let residual = inner.gradient_mapping(y_star, lambda_star)?;
    let threshold = 10.0 * inner_tol;
    if residual > threshold {
        return Err(MmboError::StaleMaximizer {
            residual,
            threshold,
        });
    }
    let (fx, _, _) = problem.eval_f_grads(&outer.x, y_star, lambda_star)?;
    let (gz, _) = problem.eval_g_grads(&outer.z, lambda_star)?;
    Ok(VarthetaGrad {
        x: fx,
        z: gz * params.rho,
        u: (y_star - &outer.u) * params.tau,
        v: (lambda_star - &outer.v) * params.tau,
    })
}

/// `(P_hi, P_low) = (f_hi + ρ(g_hi − g_low), f_low − ρ(g_hi − g_low))`.
pub fn p_rho_bounds(f_hi: f64, f_low: f64, g_hi: f64, g_low: f64, rho: f64) -> Result<(f64, f64)> {
    check_rho(rho)?;
    let spread = rho * (g_hi - g_low);
    Ok((f_hi + spread, f_low - spread))
}
