use mmbo::harness::{ex61, ex62, ex63};
use mmbo::solver::{
    inner_ascent, iteration_budget, momentum, outer_step, penalty_continuation, AnchorUpdate,
    BudgetConstants, RhoAdvance, RhoSchedule, SolverConfig, SolverState, StepRule, StepSize,
};
use mmbo::{na_pg_mad, pg_mad, solve, MmboError};
use proptest::prelude::*;

#[test]
fn equal_seeds_give_identical_runs() {
    let p = ex62();
    let cfg = SolverConfig::examples().with_seed(7);
    let a = pg_mad(&p, &cfg).unwrap();
    let b = pg_mad(&p, &cfg).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.records.len(), b.records.len());
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(
            (ra.error, ra.lower_gap, ra.rho),
            (rb.error, rb.lower_gap, rb.rho)
        );
    }
    let c = pg_mad(&p, &cfg.clone().with_seed(8)).unwrap();
    assert_ne!(a.records[0].error, c.records[0].error);
}

#[test]
fn iterates_stay_feasible() {
    for p in [ex61(), ex62(), ex63()] {
        let cfg = SolverConfig::examples().with_seed(3);
        let mut state = SolverState::initial(&p, &cfg.init, cfg.seed, cfg.lower_tol).unwrap();
        let params = cfg.steps.params(&p, 25.0).unwrap();
        for _ in 0..30 {
            let (y, l) =
                inner_ascent(&p, &params, &state, 5, Some(momentum(&params).unwrap())).unwrap();
            let o = outer_step(&p, &params, &state, &y, &l, AnchorUpdate::Proximal).unwrap();
            assert_eq!(o.u, y);
            assert_eq!(o.v, l);
            state = SolverState {
                x: o.x,
                y,
                lambda: l,
                z: o.z,
                u: o.u,
                v: o.v,
                k: state.k + 1,
            };
            assert!(p.set_x.violation(&state.x) == 0.0);
            assert!(p.set_y.violation(&state.y) == 0.0);
            assert!(p.set_lambda.violation(&state.lambda) == 0.0);
            assert!(p.set_y.violation(&state.z) == 0.0);
        }
    }
}

#[test]
fn descent_anchor_follows_gradient_step() {
    let p = ex62();
    let cfg = SolverConfig::examples();
    let state = SolverState::initial(&p, &cfg.init, 1, cfg.lower_tol).unwrap();
    let params = cfg.steps.params(&p, 1.0).unwrap();
    let (y, l) = inner_ascent(&p, &params, &state, 3, None).unwrap();
    let o = outer_step(&p, &params, &state, &y, &l, AnchorUpdate::Descent).unwrap();
    let s = params.alpha_x * params.tau;
    assert!((o.u[0] - (state.u[0] - s * (y[0] - state.u[0]))).abs() < 1e-14);
    assert!((o.v[0] - (state.v[0] - s * (l[0] - state.v[0]))).abs() < 1e-14);
    let mut unit = params;
    unit.alpha_x = 1.0 / unit.tau;
    let o = outer_step(&p, &unit, &state, &y, &l, AnchorUpdate::Descent).unwrap();
    assert!((o.u[0] - (2.0 * state.u[0] - y[0])).abs() < 1e-14);
    assert!((o.v[0] - (2.0 * state.v[0] - l[0])).abs() < 1e-14);
    let (y0, l0) = inner_ascent(&p, &params, &state, 0, None).unwrap();
    assert_eq!((y0, l0), (state.y.clone(), state.lambda.clone()));
}

#[test]
fn diverging_anchors_report_non_finite_iteration() {
    let p = ex62();
    let mut cfg = SolverConfig::examples();
    cfg.anchor = AnchorUpdate::Descent;
    cfg.advance = RhoAdvance::PerIteration;
    cfg.steps.alpha_x = StepSize::Absolute(1e3);
    cfg.stopping.max_outer = 10_000;
    match solve(&p, &cfg) {
        Err(MmboError::NonFinite { iteration }) => assert!(iteration > 0),
        other => panic!("expected NonFinite, got {:?}", other.map(|t| t.status)),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let p = ex62();
    let mut cfg = SolverConfig::examples();
    cfg.inner_steps = 0;
    assert!(solve(&p, &cfg).is_err());
    let mut cfg = SolverConfig::examples();
    cfg.theta_override = Some(1.0);
    assert!(solve(&p, &cfg).is_err());
    let mut cfg = SolverConfig::examples();
    cfg.stopping.error_tol = 0.0;
    assert!(solve(&p, &cfg).is_err());
    let mut cfg = SolverConfig::examples();
    cfg.steps.tau_factor = 1.0;
    assert!(solve(&p, &cfg).is_err());
}

#[test]
fn both_methods_converge_on_ex62() {
    let p = ex62();
    for seed in 1..=3 {
        let cfg = SolverConfig::examples().with_seed(seed);
        for trace in [pg_mad(&p, &cfg).unwrap(), na_pg_mad(&p, &cfg).unwrap()] {
            assert!(trace.converged());
            let s = &trace.state;
            assert!(
                (s.x[0] - 1.0).abs() < 1e-2
                    && (s.y[0] - 1.0).abs() < 1e-2
                    && (s.lambda[0] + 2.0).abs() < 1e-2
            );
            assert_eq!(
                trace.total_inner_steps(),
                trace.iterations() * cfg.inner_steps
            );
        }
    }
}

#[test]
fn step_fractions_scale_with_rho() {
    let p = ex62();
    let rule = StepRule {
        alpha_x: StepSize::Fraction(0.5),
        ..StepRule::default()
    };
    let a = rule.params(&p, 1.0).unwrap();
    let b = rule.params(&p, 100.0).unwrap();
    assert!(b.alpha_x < a.alpha_x && b.alpha_y < a.alpha_y);
    let lp = p.lipschitz_constants(100.0).unwrap().lp;
    assert_eq!(b.tau, 2.0 * lp);
    assert_eq!(b.kappa, b.tau - lp);
    assert!((b.alpha_y * (lp + b.tau) - 0.99).abs() < 1e-15);
}

#[test]
fn continuation_warm_starts_through_stages() {
    let p = ex62();
    let schedule = [(1.0, 1e-2), (10.0, 1e-3), (100.0, 1e-4)];
    let mut cfg = SolverConfig::examples().with_seed(2);
    cfg.stopping.max_outer = 2000;
    let trace = penalty_continuation(&p, &schedule, &cfg, Some((10.0, 2.0))).unwrap();
    assert_eq!(trace.stages.len(), 3);
    assert!(trace.converged);
    for (st, (rho, eps)) in trace.stages.iter().zip(schedule) {
        assert_eq!((st.rho, st.epsilon), (rho, eps));
        assert!(st.error <= eps);
        assert_eq!(st.lower_gap_bound, Some((10.0 - 2.0 + 2.0 * eps) / rho));
    }
    assert!(trace
        .stages
        .windows(2)
        .all(|w| w[1].lower_gap <= w[0].lower_gap + 1e-8));
    assert!(trace.records.windows(2).all(|w| w[1].k == w[0].k + 1));
    assert!(penalty_continuation(&p, &[(10.0, 1e-3), (1.0, 1e-4)], &cfg, None).is_err());
    assert!(penalty_continuation(&p, &[], &cfg, None).is_err());
}

fn constants() -> BudgetConstants {
    BudgetConstants {
        epsilon: 1e-2,
        kappa: 2.0,
        alpha_x: 1e-3,
        alpha_y: 0.1,
        omega1: 5.0,
        l_p: 2.0,
        tau: 4.0,
        l_vartheta: 200.0,
        delta_vartheta: 3.0,
    }
}

#[test]
fn budgets_grow_as_epsilon_shrinks() {
    let c = constants();
    for acc in [false, true] {
        let a = iteration_budget(&c, acc).unwrap();
        let b = iteration_budget(&BudgetConstants { epsilon: 1e-3, ..c }, acc).unwrap();
        assert!(b.t_bound > a.t_bound && b.k_bound > a.k_bound);
        assert!(a.t as f64 >= a.t_bound && (a.t as f64) < a.t_bound + 1.0);
    }
    assert!(iteration_budget(&c, true).unwrap().t < iteration_budget(&c, false).unwrap().t);
    assert!(iteration_budget(&BudgetConstants { alpha_x: 1.0, ..c }, false).is_err());
    assert!(iteration_budget(&BudgetConstants { alpha_y: 1.0, ..c }, false).is_err());
}

proptest! {
    #[test]
    fn geometric_schedule_is_monotone_and_capped(start in 1e-3..10.0f64, factor in 1.0..10.0f64, cap in 1.0..1e6f64, j in 0usize..60) {
        let s = RhoSchedule::Geometric { start, factor, cap };
        prop_assert!(s.rho(j) <= cap);
        prop_assert!(s.rho(j + 1) >= s.rho(j));
        prop_assert_eq!(s.cap(), cap);
        prop_assert_eq!(RhoSchedule::Fixed(start).rho(j), start);
    }
}

#[test]
fn geometric5_hits_powers_of_five() {
    let s = RhoSchedule::geometric5(1e4);
    assert_eq!(s.rho(0), 0.2);
    assert!((s.rho(1) - 1.0).abs() < 1e-15);
    assert!((s.rho(3) - 25.0).abs() < 1e-12);
    assert_eq!(s.rho(20), 1e4);
}
