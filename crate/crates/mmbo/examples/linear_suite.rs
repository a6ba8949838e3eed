//! Generates a random linear instance of the requested size and solves it with both methods
//! at `ρ = 10⁴`, printing the stopping measures and wall time.
//!
//! Run with `cargo run --release --example linear_suite [dx dy dl seed eq_rows]`. Without
//! `eq_rows` the equality blocks are square, as in the original recipe.

use std::time::Instant;

use mmbo::harness::{gen_linear_instance, LinearDims, LinearRecipe};
use mmbo::solver::{na_pg_mad, pg_mad, SolverConfig};

fn main() -> mmbo::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let get = |i: usize, d: usize| args.get(i).copied().unwrap_or(d);
    let dims = LinearDims {
        dx: get(0, 100),
        dy: get(1, 50),
        dl: get(2, 50),
    };
    let seed = get(3, 1) as u64;
    let recipe = LinearRecipe {
        eq_rows: args.get(4).copied(),
        ..LinearRecipe::default()
    };
    let (problem, _) = gen_linear_instance(dims, seed, &recipe)?;
    let cfg = SolverConfig::linear().with_seed(seed);
    for (name, run) in [
        ("PG-MAD", pg_mad as fn(_, _) -> _),
        ("NA-PG-MAD", na_pg_mad),
    ] {
        let started = Instant::now();
        let trace = run(&problem, &cfg)?;
        let last = trace.last();
        println!(
            "{name:<9} converged={} k={} sum_of_gaps={:.3e} error={:.3e} lower_gap={:.3e} rel_x={:.3e} wall={:.2}s",
            trace.converged(),
            trace.iterations(),
            last.gap_x + last.gap_y + last.gap_lambda + last.gap_z,
            last.error,
            last.lower_gap,
            last.rel_x_change,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
