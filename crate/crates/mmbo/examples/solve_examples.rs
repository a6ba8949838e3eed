//! Solves the three built-in examples with PG-MAD and NA-PG-MAD from several random starts
//! and prints iteration counts, the terminal point and the stationarity measures.
//!
//! Run with `cargo run --release --example solve_examples`.

use mmbo::harness::builtin_example;
use mmbo::solver::{na_pg_mad, pg_mad, SolverConfig};

fn main() -> mmbo::Result<()> {
    for id in ["ex61", "ex62", "ex63"] {
        let problem = builtin_example(id)?;
        for seed in 0..5 {
            let cfg = SolverConfig::examples().with_seed(seed);
            for (name, trace) in [
                ("PG-MAD", pg_mad(&problem, &cfg)?),
                ("NA-PG-MAD", na_pg_mad(&problem, &cfg)?),
            ] {
                let last = trace.last();
                let s = &trace.state;
                println!(
                    "{id} seed {seed} {name:<9} converged={} k={:<3} inner={:<5} error={:.2e} lower_gap={:.2e} x={:.4?} y={:.4?} lambda={:.4?}",
                    trace.converged(),
                    trace.iterations(),
                    trace.total_inner_steps(),
                    last.error,
                    last.lower_gap,
                    s.x.as_slice(),
                    s.y.as_slice(),
                    s.lambda.as_slice(),
                );
            }
        }
    }
    Ok(())
}
