//! Penalty continuation on the `ex62` built-in: solves the penalized problem for an increasing
//! sequence of `ρ` with shrinking tolerances, warm-starting each stage, and prints the
//! lower-level gap of every stage next to its indicative bound.
//!
//! Run with `cargo run --release --example continuation`.

use mmbo::harness::{ex62, grid_oracle};
use mmbo::solver::{penalty_continuation, SolverConfig};

fn main() -> mmbo::Result<()> {
    let problem = ex62();
    let f_hi = problem.estimate_bounds(1, 0)?.f_hi;
    let phi_star = grid_oracle(&problem, 201, 1e-9)?.phi_star;
    let schedule = [(1.0, 1e-2), (10.0, 1e-3), (100.0, 1e-4), (1e3, 1e-5)];
    let mut cfg = SolverConfig::examples().with_seed(1);
    cfg.stopping.max_outer = 5000;
    let trace = penalty_continuation(&problem, &schedule, &cfg, Some((f_hi, phi_star)))?;
    for st in &trace.stages {
        println!(
            "rho={:<7.0e} eps={:.0e} iterations={:<4} error={:.2e} lower_gap={:.2e} bound={:.2e}",
            st.rho,
            st.epsilon,
            st.iterations,
            st.error,
            st.lower_gap,
            st.lower_gap_bound.unwrap_or(f64::NAN)
        );
    }
    let s = &trace.state;
    println!(
        "terminal x={:.6?} y={:.6?} lambda={:.6?} converged={}",
        s.x.as_slice(),
        s.y.as_slice(),
        s.lambda.as_slice(),
        trace.converged
    );
    Ok(())
}
