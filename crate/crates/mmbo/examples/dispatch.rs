//! Solves the small distribution-system / microgrid dispatch instance and prints the
//! generator schedule, the microgrid purchases and the bus prices.
//!
//! Run with `cargo run --release --example dispatch [seed]`.

use mmbo::harness::{dispatch_lite, dispatch_solver_config};
use mmbo::solver::pg_mad;

fn main() -> mmbo::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let problem = dispatch_lite(seed)?;
    let trace = pg_mad(&problem, &dispatch_solver_config())?;
    let last = trace.last();
    println!(
        "converged={} iterations={} rho={:.1e} error={:.3e} lower_gap={:.3e}",
        trace.converged(),
        trace.iterations(),
        last.rho,
        last.error,
        last.lower_gap
    );
    let s = &trace.state;
    println!("generation x = {:.4?}", s.x.as_slice());
    println!("purchases  y = {:.4?}", s.y.as_slice());
    println!("prices     λ = {:.4?}", s.lambda.as_slice());
    println!(
        "balance Ax + By − b = {:.4?}",
        problem.coupling(&s.x, &s.y).as_slice()
    );
    Ok(())
}
