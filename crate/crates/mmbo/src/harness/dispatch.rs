use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::{BoxSet, ConvexSet, Polyhedron};
use crate::model::{Dims, MinimaxBilevelProblem, QuadraticLower, QuadraticUpper};
use crate::solver::SolverConfig;

/// Data of a small continuous distribution-system / microgrid dispatch model on `n` buses
/// with `m` distribution-system generators.
///
/// The distribution system chooses generator outputs `x` and bus prices `λ >= 0` for the
/// balance rows `G x >= y + ℓ_ds`, which enter as `λᵀ(Ax + By − b)` with `A = −G`, `B = I`,
/// `b = −ℓ_ds`. The microgrid buys `y` at the prices and minimizes `(λ − u)ᵀ y`, where `u`
/// is its marginal value of energy, subject to `0 <= y <= y_max`, `1ᵀy <= import_cap` and
/// `y >= ℓ_mg − gen_mg` (local load beyond local generation must be imported).
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchData {
    pub gen_cost: DVector<f64>,
    /// Bus-by-generator incidence.
    pub incidence: DMatrix<f64>,
    pub gen_max: DVector<f64>,
    pub gen_total_cap: f64,
    pub ds_load: DVector<f64>,
    pub mg_value: DVector<f64>,
    pub mg_load: DVector<f64>,
    pub mg_gen: DVector<f64>,
    pub y_max: DVector<f64>,
    pub import_cap: f64,
    pub price_max: f64,
}

impl DispatchData {
    /// Three buses and four generators with costs, loads and limits drawn from `seed`.
    ///
    /// Loads exceed what the generators can deliver to any bus, so every balance row is
    /// short and prices settle at `price_max`. The generators then fill the total capacity
    /// in merit order and the microgrid imports only what it must.
    pub fn synthetic(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (3, 4);
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let gen_cost = DVector::from_fn(m, |_, _| u(1.0, 3.0));
        // Generators 0..3 sit on buses 0..3; generator 3 feeds buses 0 and 2 equally.
        let mut incidence = DMatrix::zeros(n, m);
        for i in 0..n {
            incidence[(i, i)] = 1.0;
        }
        incidence[(0, 3)] = 0.5;
        incidence[(2, 3)] = 0.5;
        let gen_max = DVector::from_fn(m, |_, _| u(1.0, 2.0));
        let ds_load = DVector::from_fn(n, |_, _| u(3.5, 4.5));
        let mg_value = DVector::from_fn(n, |_, _| u(1.5, 3.5));
        let mg_load = DVector::from_fn(n, |_, _| u(0.2, 0.5));
        let mg_gen = DVector::from_fn(n, |_, _| u(0.1, 0.3));
        let y_max = DVector::from_element(n, 1.0);
        Self {
            gen_cost,
            incidence,
            gen_total_cap: 0.9 * gen_max.sum(),
            gen_max,
            ds_load,
            mg_value,
            mg_load,
            mg_gen,
            y_max,
            import_cap: 2.0,
            price_max: 5.0,
        }
    }

    pub fn build(&self) -> Result<MinimaxBilevelProblem> {
        let n = self.ds_load.len();
        let m = self.gen_cost.len();
        let dims = Dims::new(m, n, n)?;
        let set_x = Polyhedron::new(
            DMatrix::from_element(1, m, 1.0),
            DVector::from_element(1, self.gen_total_cap),
            DMatrix::zeros(0, m),
            DVector::zeros(0),
            BoxSet::new(DVector::zeros(m), self.gen_max.clone())?,
        )?;
        // -y <= gen_mg - load_mg, then 1ᵀy <= import_cap.
        let mut h1 = DMatrix::zeros(n + 1, n);
        let mut b1 = DVector::zeros(n + 1);
        for i in 0..n {
            h1[(i, i)] = -1.0;
            b1[i] = self.mg_gen[i] - self.mg_load[i];
            h1[(n, i)] = 1.0;
        }
        b1[n] = self.import_cap;
        let set_y = Polyhedron::new(
            h1,
            b1,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            BoxSet::new(DVector::zeros(n), self.y_max.clone())?,
        )?;
        let set_lambda = BoxSet::uniform(n, 0.0, self.price_max)?;
        MinimaxBilevelProblem::new(
            "dispatch",
            dims,
            Arc::new(QuadraticUpper::linear(self.gen_cost.clone(), n)),
            -self.incidence.clone(),
            DMatrix::identity(n, n),
            -self.ds_load.clone(),
            Arc::new(QuadraticLower::linear(-self.mg_value.clone())),
            ConvexSet::Polyhedron(set_x),
            ConvexSet::Polyhedron(set_y),
            ConvexSet::Box(set_lambda),
        )
    }
}

/// The default dispatch instance for `seed`.
pub fn dispatch_lite(seed: u64) -> Result<MinimaxBilevelProblem> {
    DispatchData::synthetic(seed).build()
}

/// Solver settings used for the dispatch instance: the curved-example settings with up to
/// 1000 outer iterations and tolerances `10⁻³`.
pub fn dispatch_solver_config() -> SolverConfig {
    let mut cfg = SolverConfig::examples();
    cfg.stopping.max_outer = 1000;
    cfg.stopping.error_tol = 1e-3;
    cfg.stopping.lower_gap_tol = 1e-3;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{feasibility_check, lower_level_solve};

    #[test]
    fn all_sets_are_strictly_feasible() {
        let p = dispatch_lite(0).unwrap();
        for set in [&p.set_x, &p.set_y, &p.set_lambda] {
            let cert = feasibility_check(set);
            assert!(cert.feasible && cert.margin > 0.0, "margin {}", cert.margin);
        }
    }

    #[test]
    fn zero_load_makes_zero_purchase_optimal() {
        let mut data = DispatchData::synthetic(5);
        data.mg_load.fill(0.0);
        // Nonnegative net cost c2 + λ: prices at or above the microgrid's values.
        let p = data.build().unwrap();
        let zero = DVector::zeros(3);
        assert!(p.set_y.violation(&zero) == 0.0);
        let lambda = data.mg_value.clone();
        let low = lower_level_solve(&p, &lambda, 1e-12).unwrap();
        assert!((p.eval_g(&zero, &lambda).unwrap() - low.value).abs() < 1e-12);
        assert!(low.value >= -1e-12);
    }

    #[test]
    fn same_seed_same_instance() {
        assert_eq!(DispatchData::synthetic(3), DispatchData::synthetic(3));
        assert_ne!(DispatchData::synthetic(3), DispatchData::synthetic(4));
    }
}
