//! Evaluates the value function `ϑ` of the `ex62` built-in and its Danskin gradient at a few outer
//! points, and compares the gradient with central finite differences.
//!
//! Run with `cargo run --release --example value_function`.

use mmbo::harness::ex62;
use mmbo::penalty::{vartheta, vartheta_grad, OuterPoint};
use mmbo::solver::StepRule;
use nalgebra::DVector;

fn main() -> mmbo::Result<()> {
    let problem = ex62();
    let params = StepRule::default().params(&problem, 10.0)?;
    let tol = 1e-10;
    let at = |w: [f64; 4]| OuterPoint {
        x: DVector::from_element(1, w[0]),
        z: DVector::from_element(1, w[1]),
        u: DVector::from_element(1, w[2]),
        v: DVector::from_element(1, w[3]),
    };
    for w in [
        [0.0, 0.0, 0.0, 0.0],
        [0.5, -0.3, 0.9, -1.5],
        [1.0, 1.0, 1.0, -2.0],
    ] {
        let th = vartheta(&problem, &params, &at(w), tol)?;
        let grad = vartheta_grad(&problem, &params, &at(w), &th.y, &th.lambda, tol)?.stacked();
        let h = 1e-6;
        let mut fd = [0.0; 4];
        for (i, d) in fd.iter_mut().enumerate() {
            let (mut a, mut b) = (w, w);
            a[i] += h;
            b[i] -= h;
            *d = (vartheta(&problem, &params, &at(a), tol)?.value
                - vartheta(&problem, &params, &at(b), tol)?.value)
                / (2.0 * h);
        }
        println!(
            "(x,z,u,v)={w:?} vartheta={:.6} maximizer=({:.4}, {:.4}) grad={:.5?} finite-diff={:.5?}",
            th.value,
            th.y[0],
            th.lambda[0],
            grad.as_slice(),
            fd
        );
    }
    Ok(())
}
