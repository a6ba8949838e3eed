//! Theoretical inner and outer iteration budgets of PG-MAD and NA-PG-MAD on the `ex62` built-in for
//! a range of target accuracies, using step sizes that satisfy the step-size conditions.
//!
//! Run with `cargo run --release --example budgets`.

use mmbo::harness::ex62;
use mmbo::penalty::l_vartheta;
use mmbo::solver::{
    inner_suboptimality, iteration_budget, BudgetConstants, SolverConfig, SolverState, StepRule,
    StepSize,
};

fn main() -> mmbo::Result<()> {
    let problem = ex62();
    let rule = StepRule {
        alpha_x: StepSize::Fraction(0.5),
        ..StepRule::default()
    };
    let cfg = SolverConfig::examples();
    let state = SolverState::initial(&problem, &cfg.init, 1, cfg.lower_tol)?;
    let bounds = problem.estimate_bounds(1, 0)?;
    for eps in [1e-1, 1e-2, 1e-3] {
        let rho = 1.0 / eps;
        let params = rule.params(&problem, rho)?;
        let lip = problem.lipschitz_constants(rho)?;
        let outer = state.outer();
        let theta0 = mmbo::penalty::vartheta(&problem, &params, &outer, 1e-10)?.value;
        let (_, p_low) =
            mmbo::penalty::p_rho_bounds(bounds.f_hi, bounds.f_low, bounds.g_hi, bounds.g_low, rho)?;
        let c = BudgetConstants {
            epsilon: eps,
            kappa: params.kappa,
            alpha_x: params.alpha_x,
            alpha_y: params.alpha_y,
            omega1: inner_suboptimality(&problem, &params, &state, 1e-10)?.max(1e-12),
            l_p: lip.lp,
            tau: params.tau,
            l_vartheta: l_vartheta(&lip, rho, params.tau, params.kappa),
            delta_vartheta: theta0 - p_low,
        };
        for accelerated in [false, true] {
            let b = iteration_budget(&c, accelerated)?;
            println!(
                "eps={eps:.0e} {:<9} nu={:.4} T={} K={:.3e}",
                if accelerated { "NA-PG-MAD" } else { "PG-MAD" },
                b.nu,
                b.t,
                b.k as f64
            );
        }
    }
    Ok(())
}
