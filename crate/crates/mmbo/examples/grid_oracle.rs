//! Brute-force estimates of the optimal pessimistic value of the three built-in examples,
//! with the certified discretization gap.
//!
//! Run with `cargo run --release --example grid_oracle`.

use mmbo::harness::{builtin_example, grid_oracle};

fn main() -> mmbo::Result<()> {
    for (id, resolution) in [("ex61", 201), ("ex62", 201), ("ex63", 41)] {
        let r = grid_oracle(&builtin_example(id)?, resolution, 1e-9)?;
        println!(
            "{id}: phi*={:.6} argmin x={:.4?} certified_gap={:.3e} certified={} evaluations={}",
            r.phi_star, r.argmin_x, r.certified_gap, r.certified, r.evaluations
        );
    }
    Ok(())
}
