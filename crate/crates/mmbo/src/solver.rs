//! Projected gradient multi-step ascent descent (PG-MAD), its Nesterov-accelerated variant
//! (NA-PG-MAD), and the penalty continuation loop around them.
//!
//! Each outer iteration runs `T` projected ascent steps on `Q` in `(y, λ)` from the previous
//! `(y, λ)`, then one projected descent step in `(x, z)` and an update of the proximal
//! anchors `(u, v)`.

use std::time::Instant;

use log::{debug, info, warn};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{MmboError, Result};
use crate::geometry::lower_level_solve;
use crate::model::MinimaxBilevelProblem;
use crate::penalty::{l_vartheta, p_rho_value, vartheta, InnerProblem, OuterPoint, PenaltyParams};
use crate::stationarity::{composite_error, gap_measures, GapScales};

/// A step size given directly or as a fraction of its theoretical upper bound
/// (`1/L_ϑ` for `α_x`, `1/(L_P + τ)` for `α_y`), re-evaluated whenever `ρ` changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StepSize {
    Absolute(f64),
    Fraction(f64),
}

/// How `τ`, `κ`, `α_x` and `α_y` follow from `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRule {
    pub alpha_x: StepSize,
    pub alpha_y: StepSize,
    /// `τ = tau_factor · L_P`, with `κ = τ − L_P`.
    pub tau_factor: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            alpha_x: StepSize::Absolute(0.618),
            alpha_y: StepSize::Fraction(0.99),
            tau_factor: 2.0,
        }
    }
}

impl StepRule {
    pub fn params(&self, problem: &MinimaxBilevelProblem, rho: f64) -> Result<PenaltyParams> {
        if !(self.tau_factor > 1.0) {
            return Err(MmboError::InvalidParameter(
                "tau_factor must exceed 1".into(),
            ));
        }
        let lip = problem.lipschitz_constants(rho)?;
        let lp = lip.lp.max(f64::MIN_POSITIVE);
        let tau = self.tau_factor * lp;
        let kappa = tau - lp;
        let alpha_y = match self.alpha_y {
            StepSize::Absolute(a) => a,
            StepSize::Fraction(f) => f / (lp + tau),
        };
        let alpha_x = match self.alpha_x {
            StepSize::Absolute(a) => a,
            StepSize::Fraction(f) => f / l_vartheta(&lip, rho, tau, kappa),
        };
        let params = PenaltyParams {
            rho,
            kappa,
            tau,
            alpha_x,
            alpha_y,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Update of the anchors `(u, v)` after the descent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AnchorUpdate {
    /// `u⁺ = y⁺`, `v⁺ = λ⁺`: the anchors follow the inner iterate.
    Proximal,
    /// `u⁺ = (1 + α_x τ) u − α_x τ y⁺` (and likewise `v`): a gradient step on `ϑ` in `(u, v)`.
    Descent,
}

/// Penalty weights `ρ_j`, indexed by schedule position `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RhoSchedule {
    Fixed(f64),
    /// `ρ_j = min(start · factor^j, cap)`.
    Geometric {
        start: f64,
        factor: f64,
        cap: f64,
    },
}

impl RhoSchedule {
    /// `ρ_k = 5^{k−1}` capped at `cap`.
    pub fn geometric5(cap: f64) -> Self {
        RhoSchedule::Geometric {
            start: 0.2,
            factor: 5.0,
            cap,
        }
    }

    pub fn rho(&self, j: usize) -> f64 {
        match *self {
            RhoSchedule::Fixed(r) => r,
            RhoSchedule::Geometric { start, factor, cap } => {
                let mut r = start;
                for _ in 0..j {
                    r *= factor;
                    if r >= cap {
                        return cap;
                    }
                }
                r.min(cap)
            }
        }
    }

    pub fn cap(&self) -> f64 {
        match *self {
            RhoSchedule::Fixed(r) => r,
            RhoSchedule::Geometric { cap, .. } => cap,
        }
    }
}

/// When the schedule position advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RhoAdvance {
    /// After every outer iteration.
    PerIteration,
    /// After an iteration whose composite error is at most `max(error_tol, 1/ρ)`; the anchors
    /// are then reset to `(y, λ)`.
    OnStationarity,
}

/// Starting point of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// `x, y, λ` uniform in their bounding boxes and projected, `u, v` standard normal,
    /// `z` a lower-level minimizer at `λ`.
    UniformBoxes,
    /// Every block standard normal, then `x, y, λ, z` projected onto their sets.
    Normal,
    Given(SolverState),
}

/// Composite error used by the stopping test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorMetric {
    /// Norm of the stacked gap vectors.
    StackedNorm,
    /// Sum of the four gap norms.
    SumOfNorms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingRule {
    pub max_outer: usize,
    /// Success requires the current `ρ` to have reached this value.
    pub rho_cap: f64,
    pub error_tol: f64,
    pub lower_gap_tol: f64,
    /// Optional `‖x_k − x_{k−1}‖ / max(1, ‖x_k‖)` threshold, with `x_{−1} = 0`.
    pub rel_x_tol: Option<f64>,
    pub metric: ErrorMetric,
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        let mut vals = vec![self.rho_cap, self.error_tol, self.lower_gap_tol];
        vals.extend(self.rel_x_tol);
        if vals.iter().any(|v| !(*v > 0.0)) {
            return Err(MmboError::InvalidParameter(
                "stopping tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub steps: StepRule,
    pub schedule: RhoSchedule,
    pub advance: RhoAdvance,
    pub anchor: AnchorUpdate,
    /// Inner ascent steps per outer iteration.
    pub inner_steps: usize,
    pub accelerated: bool,
    /// Fixed momentum; `None` uses `(1 − √(κα_y))/(1 + √(κα_y))`.
    pub theta_override: Option<f64>,
    pub stopping: StoppingRule,
    pub init: Init,
    pub seed: u64,
    /// Tolerance of the lower-level solves behind the recorded lower-level gap.
    pub lower_tol: f64,
}

impl SolverConfig {
    /// Settings for the small curved examples: `α_x = 0.618`, `α_y = 0.99/(L_P + τ)`, `T = 20`,
    /// `τ = 2 L_P`, `ρ` from `0.2` by factors of 5 up to `10⁴`, advanced on stationarity,
    /// proximal anchors; stop after 200 iterations or once `ρ = 10⁴`, error `<= 10⁻⁴` and
    /// lower-level gap `<= 10⁻⁶`.
    pub fn examples() -> Self {
        Self {
            steps: StepRule::default(),
            schedule: RhoSchedule::geometric5(1e4),
            advance: RhoAdvance::OnStationarity,
            anchor: AnchorUpdate::Proximal,
            inner_steps: 20,
            accelerated: false,
            theta_override: None,
            stopping: StoppingRule {
                max_outer: 200,
                rho_cap: 1e4,
                error_tol: 1e-4,
                lower_gap_tol: 1e-6,
                rel_x_tol: None,
                metric: ErrorMetric::StackedNorm,
            },
            init: Init::UniformBoxes,
            seed: 0,
            lower_tol: 1e-10,
        }
    }

    /// The update rules exactly as printed: absolute `α_x = 0.618`, `α_y = 0.1`, `ρ` advanced
    /// every iteration, descent anchors, `θ = 0.5` in accelerated mode.
    pub fn examples_as_printed() -> Self {
        Self {
            steps: StepRule {
                alpha_x: StepSize::Absolute(0.618),
                alpha_y: StepSize::Absolute(0.1),
                tau_factor: 2.0,
            },
            advance: RhoAdvance::PerIteration,
            anchor: AnchorUpdate::Descent,
            theta_override: Some(0.5),
            ..Self::examples()
        }
    }

    /// Settings for random linear instances: `α_x = 0.5`, `T = 5`, fixed `ρ = 10⁴`; stop after
    /// 1000 iterations or when the relative `x` change, the sum of gap norms and the
    /// lower-level gap are all `<= 10⁻⁴`.
    pub fn linear() -> Self {
        Self {
            steps: StepRule {
                alpha_x: StepSize::Absolute(0.5),
                alpha_y: StepSize::Fraction(0.99),
                tau_factor: 2.0,
            },
            schedule: RhoSchedule::Fixed(1e4),
            advance: RhoAdvance::PerIteration,
            anchor: AnchorUpdate::Proximal,
            inner_steps: 5,
            accelerated: false,
            theta_override: None,
            stopping: StoppingRule {
                max_outer: 1000,
                rho_cap: 1e4,
                error_tol: 1e-4,
                lower_gap_tol: 1e-4,
                rel_x_tol: Some(1e-4),
                metric: ErrorMetric::SumOfNorms,
            },
            init: Init::UniformBoxes,
            seed: 0,
            lower_tol: 1e-10,
        }
    }

    pub fn accelerated(mut self, on: bool) -> Self {
        self.accelerated = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(MmboError::InvalidParameter(
                "inner_steps must be at least 1".into(),
            ));
        }
        if let Some(t) = self.theta_override {
            if !(0.0..1.0).contains(&t) {
                return Err(MmboError::InvalidParameter(format!(
                    "theta must lie in [0, 1), got {t}"
                )));
            }
        }
        if !(self.lower_tol > 0.0) {
            return Err(MmboError::InvalidParameter(
                "lower_tol must be positive".into(),
            ));
        }
        self.stopping.validate()
    }
}

/// Iterates of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub lambda: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub k: usize,
}

impl SolverState {
    pub fn outer(&self) -> OuterPoint {
        OuterPoint {
            x: self.x.clone(),
            z: self.z.clone(),
            u: self.u.clone(),
            v: self.v.clone(),
        }
    }

    fn is_finite(&self) -> bool {
        [&self.x, &self.y, &self.lambda, &self.z, &self.u, &self.v]
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Builds a starting state.
    pub fn initial(
        problem: &MinimaxBilevelProblem,
        init: &Init,
        seed: u64,
        lower_tol: f64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = problem.dims;
        let mut normal = |n: usize| DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        match init {
            Init::Given(s) => Ok(s.clone()),
            Init::Normal => {
                let x = problem.set_x.project(&normal(d.dx))?;
                let y = problem.set_y.project(&normal(d.dy))?;
                let lambda = problem.set_lambda.project(&normal(d.dl))?;
                let z = problem.set_y.project(&normal(d.dy))?;
                let u = normal(d.dy);
                let v = normal(d.dl);
                Ok(Self {
                    x,
                    y,
                    lambda,
                    z,
                    u,
                    v,
                    k: 0,
                })
            }
            Init::UniformBoxes => {
                let u = normal(d.dy);
                let v = normal(d.dl);
                let x = problem.set_x.sample(&mut rng)?;
                let y = problem.set_y.sample(&mut rng)?;
                let lambda = problem.set_lambda.sample(&mut rng)?;
                let z = lower_level_solve(problem, &lambda, lower_tol)?.z;
                Ok(Self {
                    x,
                    y,
                    lambda,
                    z,
                    u,
                    v,
                    k: 0,
                })
            }
        }
    }
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRecord {
    pub k: usize,
    pub rho: f64,
    pub f_value: f64,
    pub p_rho_value: f64,
    pub gap_x: f64,
    pub gap_y: f64,
    pub gap_lambda: f64,
    pub gap_z: f64,
    /// Norm of the stacked gap vectors.
    pub error: f64,
    pub lower_gap: f64,
    pub elapsed_ms: f64,
    /// `‖x_k − x_{k−1}‖ / max(1, ‖x_k‖)`.
    pub rel_x_change: f64,
    /// Inner ascent steps taken so far.
    pub inner_steps: usize,
}

impl IterateRecord {
    fn metric(&self, m: ErrorMetric) -> f64 {
        match m {
            ErrorMetric::StackedNorm => self.error,
            ErrorMetric::SumOfNorms => self.gap_x + self.gap_y + self.gap_lambda + self.gap_z,
        }
    }

    /// Whether this record satisfies the stopping tolerances.
    pub fn meets(&self, rule: &StoppingRule) -> bool {
        self.rho >= rule.rho_cap * (1.0 - 1e-12)
            && self.metric(rule.metric) <= rule.error_tol
            && self.lower_gap <= rule.lower_gap_tol
            && rule.rel_x_tol.is_none_or(|t| self.rel_x_change <= t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolverStatus {
    Converged,
    MaxIterations,
}

/// Records and final state of a run.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<IterateRecord>,
    pub state: SolverState,
    pub status: SolverStatus,
    /// Parameters in force at the final iterate.
    pub params: PenaltyParams,
}

impl SolverTrace {
    pub fn last(&self) -> &IterateRecord {
        self.records
            .last()
            .expect("a trace holds at least the initial record")
    }

    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }

    /// Outer iterations performed.
    pub fn iterations(&self) -> usize {
        self.state.k
    }

    pub fn total_inner_steps(&self) -> usize {
        self.last().inner_steps
    }
}

/// Momentum `(1 − √(κα_y))/(1 + √(κα_y))`, defined when `κα_y ∈ (0, 1)`.
pub fn momentum(params: &PenaltyParams) -> Result<f64> {
    let q = params.kappa * params.alpha_y;
    if !(q > 0.0 && q < 1.0) {
        return Err(MmboError::InvalidParameter(format!(
            "momentum formula needs kappa * alpha_y in (0, 1), got {q}"
        )));
    }
    let s = q.sqrt();
    Ok((1.0 - s) / (1.0 + s))
}

/// `T` projected ascent steps on `Q` in `(y, λ)` from `(state.y, state.λ)`. With `theta`,
/// each gradient is taken at the extrapolated point `w + θ(w − w_prev)`; the momentum starts
/// from zero at every call.
pub fn inner_ascent(
    problem: &MinimaxBilevelProblem,
    params: &PenaltyParams,
    state: &SolverState,
    steps: usize,
    theta: Option<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let outer = state.outer();
    let inner = InnerProblem {
        problem,
        params,
        outer: &outer,
    };
    let (mut y, mut l) = (state.y.clone(), state.lambda.clone());
    let (mut ya, mut la) = (y.clone(), l.clone());
    for _ in 0..steps {
        let (y_next, l_next) = inner.ascent_step(&ya, &la, params.alpha_y)?;
        match theta {
            Some(th) => {
                ya = &y_next + (&y_next - &y) * th;
                la = &l_next + (&l_next - &l) * th;
            }
            None => {
                ya = y_next.clone();
                la = l_next.clone();
            }
        }
        y = y_next;
        l = l_next;
    }
    Ok((y, l))
}

/// Projected descent in `(x, z)` with gradients at `(x^k, z^k, y⁺, λ⁺)`, then the anchor update.
pub fn outer_step(
    problem: &MinimaxBilevelProblem,
    params: &PenaltyParams,
    state: &SolverState,
    y_next: &DVector<f64>,
    lambda_next: &DVector<f64>,
    anchor: AnchorUpdate,
) -> Result<OuterPoint> {
    let (fx, _, _) = problem.eval_f_grads(&state.x, y_next, lambda_next)?;
    let (gz, _) = problem.eval_g_grads(&state.z, lambda_next)?;
    let ax = params.alpha_x;
    let x = problem.set_x.project(&(&state.x - fx * ax))?;
    let z = problem
        .set_y
        .project(&(&state.z - gz * (ax * params.rho)))?;
    let (u, v) = match anchor {
        AnchorUpdate::Proximal => (y_next.clone(), lambda_next.clone()),
        AnchorUpdate::Descent => {
            let s = ax * params.tau;
            (
                &state.u * (1.0 + s) - y_next * s,
                &state.v * (1.0 + s) - lambda_next * s,
            )
        }
    };
    Ok(OuterPoint { x, z, u, v })
}

fn record(
    problem: &MinimaxBilevelProblem,
    params: &PenaltyParams,
    state: &SolverState,
    x_prev: &DVector<f64>,
    lower_tol: f64,
    started: Instant,
    inner_steps: usize,
) -> Result<IterateRecord> {
    let (x, y, l, z) = (&state.x, &state.y, &state.lambda, &state.z);
    let scales = GapScales::from_params(params);
    let gaps = gap_measures(problem, params.rho, x, y, l, z, &scales)?;
    let n = gaps.norms();
    let lower = lower_level_solve(problem, l, lower_tol)?;
    Ok(IterateRecord {
        k: state.k,
        rho: params.rho,
        f_value: problem.eval_f(x, y, l)?,
        p_rho_value: p_rho_value(problem, params.rho, x, y, l, z)?,
        gap_x: n[0],
        gap_y: n[1],
        gap_lambda: n[2],
        gap_z: n[3],
        error: composite_error(&gaps),
        lower_gap: problem.eval_g(y, l)? - lower.value,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        rel_x_change: (x - x_prev).norm() / x.norm().max(1.0),
        inner_steps,
    })
}

fn theta_for(config: &SolverConfig, params: &PenaltyParams) -> Result<Option<f64>> {
    if !config.accelerated {
        return Ok(None);
    }
    match config.theta_override {
        Some(t) => Ok(Some(t)),
        None => momentum(params).map(Some),
    }
}

/// Runs the configured method. Fails on a non-finite iterate, reporting the iteration.
pub fn solve(problem: &MinimaxBilevelProblem, config: &SolverConfig) -> Result<SolverTrace> {
    config.validate()?;
    let started = Instant::now();
    let mut state = SolverState::initial(problem, &config.init, config.seed, config.lower_tol)?;
    let mut j = 0usize;
    let mut params = config.steps.params(problem, config.schedule.rho(j))?;
    warn_theory(problem, &params);
    let zero_x = DVector::zeros(problem.dims.dx);
    let mut inner_total = 0usize;
    let mut records = vec![record(
        problem,
        &params,
        &state,
        &zero_x,
        config.lower_tol,
        started,
        0,
    )?];
    let mut status = SolverStatus::MaxIterations;
    if records[0].meets(&config.stopping) {
        status = SolverStatus::Converged;
    }

    while status != SolverStatus::Converged && state.k < config.stopping.max_outer {
        let theta = theta_for(config, &params)?;
        let (y_next, l_next) = inner_ascent(problem, &params, &state, config.inner_steps, theta)?;
        inner_total += config.inner_steps;
        let outer = outer_step(problem, &params, &state, &y_next, &l_next, config.anchor)?;
        let x_prev = state.x.clone();
        state = SolverState {
            x: outer.x,
            y: y_next,
            lambda: l_next,
            z: outer.z,
            u: outer.u,
            v: outer.v,
            k: state.k + 1,
        };
        if !state.is_finite() {
            warn!("non-finite iterate at outer iteration {}", state.k);
            return Err(MmboError::NonFinite { iteration: state.k });
        }
        let rec = record(
            problem,
            &params,
            &state,
            &x_prev,
            config.lower_tol,
            started,
            inner_total,
        )?;
        debug!(
            "k={} rho={:.3e} error={:.3e} lower_gap={:.3e}",
            rec.k, rec.rho, rec.error, rec.lower_gap
        );
        let done = rec.meets(&config.stopping);
        let advance = match config.advance {
            RhoAdvance::PerIteration => true,
            RhoAdvance::OnStationarity => {
                rec.error <= config.stopping.error_tol.max(1.0 / params.rho)
            }
        };
        records.push(rec);
        if done {
            status = SolverStatus::Converged;
            break;
        }
        if advance {
            let next_rho = config.schedule.rho(j + 1);
            if next_rho != params.rho {
                j += 1;
                params = config.steps.params(problem, next_rho)?;
                if config.advance == RhoAdvance::OnStationarity {
                    state.u = state.y.clone();
                    state.v = state.lambda.clone();
                }
                debug!("rho advanced to {next_rho:.3e} at k={}", state.k);
            }
        }
    }
    info!(
        "{} on {}: {:?} after {} outer iterations",
        if config.accelerated {
            "NA-PG-MAD"
        } else {
            "PG-MAD"
        },
        problem.name,
        status,
        state.k
    );
    Ok(SolverTrace {
        records,
        state,
        status,
        params,
    })
}

fn warn_theory(problem: &MinimaxBilevelProblem, params: &PenaltyParams) {
    if let Ok(v) = params.theory_violations(problem) {
        for msg in v {
            debug!("step-size condition not met: {msg}");
        }
    }
}

/// PG-MAD: [`solve`] with plain inner steps.
pub fn pg_mad(problem: &MinimaxBilevelProblem, config: &SolverConfig) -> Result<SolverTrace> {
    solve(problem, &config.clone().accelerated(false))
}

/// NA-PG-MAD: [`solve`] with extrapolated inner steps.
pub fn na_pg_mad(problem: &MinimaxBilevelProblem, config: &SolverConfig) -> Result<SolverTrace> {
    solve(problem, &config.clone().accelerated(true))
}

/// One stage of [`penalty_continuation`].
#[derive(Debug, Clone, Serialize)]
pub struct ContinuationStage {
    pub rho: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub error: f64,
    pub lower_gap: f64,
    pub converged: bool,
    /// `(f_hi − Φ* + 2ε)/ρ` when `f_hi` and `Φ*` are supplied. The lemma behind it adds a
    /// term `δ_ρ(x)` that is not computable, so the value is indicative.
    pub lower_gap_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ContinuationTrace {
    pub stages: Vec<ContinuationStage>,
    pub records: Vec<IterateRecord>,
    pub state: SolverState,
    pub converged: bool,
}

/// Solves the penalized problem for each `(ρ_k, ε_k)` in turn, warm-starting from the previous
/// stage with anchors reset to `(y, λ)`. A stage ends when the composite error is at most `ε_k`
/// (the lower-level gap enters only through the final stage's stopping rule) or after
/// `config.stopping.max_outer` iterations.
pub fn penalty_continuation(
    problem: &MinimaxBilevelProblem,
    schedule: &[(f64, f64)],
    config: &SolverConfig,
    f_hi_phi_star: Option<(f64, f64)>,
) -> Result<ContinuationTrace> {
    if schedule.is_empty() {
        return Err(MmboError::InvalidParameter(
            "empty continuation schedule".into(),
        ));
    }
    for w in schedule.windows(2) {
        if !(w[1].0 >= w[0].0 && w[1].1 <= w[0].1) {
            return Err(MmboError::InvalidParameter(
                "continuation needs nondecreasing rho and nonincreasing epsilon".into(),
            ));
        }
    }
    let mut state = SolverState::initial(problem, &config.init, config.seed, config.lower_tol)?;
    let mut stages = Vec::new();
    let mut records: Vec<IterateRecord> = Vec::new();
    let mut converged = true;
    let last = schedule.len() - 1;
    for (i, &(rho, eps)) in schedule.iter().enumerate() {
        let mut stage_cfg = config.clone();
        stage_cfg.schedule = RhoSchedule::Fixed(rho);
        stage_cfg.advance = RhoAdvance::PerIteration;
        stage_cfg.stopping.rho_cap = rho;
        stage_cfg.stopping.error_tol = eps;
        if i != last {
            stage_cfg.stopping.lower_gap_tol = f64::INFINITY;
        }
        let mut start = state.clone();
        start.u = start.y.clone();
        start.v = start.lambda.clone();
        start.k = 0;
        stage_cfg.init = Init::Given(start);
        let trace = solve(problem, &stage_cfg)?;
        let offset = records.last().map(|r| r.k).unwrap_or(0);
        let skip = usize::from(!records.is_empty());
        records.extend(trace.records.iter().skip(skip).map(|r| IterateRecord {
            k: r.k + offset,
            ..r.clone()
        }));
        let rec = trace.last();
        stages.push(ContinuationStage {
            rho,
            epsilon: eps,
            iterations: trace.iterations(),
            error: rec.error,
            lower_gap: rec.lower_gap,
            converged: trace.converged(),
            lower_gap_bound: f_hi_phi_star.map(|(f_hi, phi)| (f_hi - phi + 2.0 * eps) / rho),
        });
        converged &= trace.converged();
        state = trace.state;
    }
    Ok(ContinuationTrace {
        stages,
        records,
        state,
        converged,
    })
}

/// Constants entering the iteration budgets of PG-MAD and NA-PG-MAD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetConstants {
    pub epsilon: f64,
    pub kappa: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
    /// Upper bound on the inner suboptimality at the start of every outer iteration.
    pub omega1: f64,
    pub l_p: f64,
    pub tau: f64,
    pub l_vartheta: f64,
    /// `ϑ(x⁰, z⁰, u⁰, v⁰) − P_low`.
    pub delta_vartheta: f64,
}

/// Real-valued lower bounds on `T` and `K` and their integer roundings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Budget {
    pub nu: f64,
    pub t_bound: f64,
    pub k_bound: f64,
    pub t: u64,
    pub k: u64,
}

/// Inner and outer iteration counts guaranteeing an ε-stationary iterate:
/// `T >= [ln(c ν² ω₁ (L_P² + τ²) / (κ (1 − α_x L_ϑ)²)) + 2 ln(1/ε)] / (−ln(1 − r))` and
/// `K >= 16 ν² Δ_ϑ / (α_x (1 − α_x L_ϑ) ε²)`, where plain steps use `c = 32`, `r = κα_y`,
/// `ν = max(1 + α_x L_P, √3)` and accelerated steps use `c = 64`, `r = √(κα_y)`,
/// `ν = max(1 + α_x L_P, √5)`.
pub fn iteration_budget(c: &BudgetConstants, accelerated: bool) -> Result<Budget> {
    let shrink = 1.0 - c.alpha_x * c.l_vartheta;
    if !(shrink > 0.0 && shrink <= 1.0) {
        return Err(MmboError::InvalidParameter(
            "budget needs alpha_x < 1/L_vartheta".into(),
        ));
    }
    let r = c.kappa * c.alpha_y;
    if !(r > 0.0 && r < 1.0) {
        return Err(MmboError::InvalidParameter(
            "budget needs kappa * alpha_y in (0, 1)".into(),
        ));
    }
    let (factor, rate, floor) = if accelerated {
        (64.0, r.sqrt(), 5.0_f64.sqrt())
    } else {
        (32.0, r, 3.0_f64.sqrt())
    };
    let nu = (1.0 + c.alpha_x * c.l_p).max(floor);
    let nu2 = nu * nu;
    let log_arg =
        factor * nu2 * c.omega1 * (c.l_p * c.l_p + c.tau * c.tau) / (c.kappa * shrink * shrink);
    let t_bound = (log_arg.ln() + 2.0 * (1.0 / c.epsilon).ln()) / -(1.0 - rate).ln();
    let k_bound =
        16.0 * nu2 * c.delta_vartheta / (c.alpha_x * shrink) * (1.0 / (c.epsilon * c.epsilon));
    Ok(Budget {
        nu,
        t_bound,
        k_bound,
        t: t_bound.max(1.0).ceil() as u64,
        k: k_bound.max(1.0).ceil() as u64,
    })
}

/// Inner suboptimality `ϑ(x, z, u, v) − Q(y, λ)` at the start of an outer iteration.
pub fn inner_suboptimality(
    problem: &MinimaxBilevelProblem,
    params: &PenaltyParams,
    state: &SolverState,
    inner_tol: f64,
) -> Result<f64> {
    let outer = state.outer();
    let th = vartheta(problem, params, &outer, inner_tol)?;
    let inner = InnerProblem {
        problem,
        params,
        outer: &outer,
    };
    Ok(th.value - inner.value(&state.y, &state.lambda)?)
}
