mod common;

use approx::assert_relative_eq;
use common::random_quadratic;
use mmbo::harness::{
    build_linear_problem, ex61, ex62, ex63, gen_linear_instance, LinearDims, LinearRecipe,
};
use mmbo::model::spectral_norm;
use mmbo::{MinimaxBilevelProblem, MmboError};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn central_diff(f: &dyn Fn(&DVector<f64>) -> f64, p: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(p.len(), |i, _| {
        let mut a = p.clone();
        let mut b = p.clone();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    })
}

fn stack(parts: &[&DVector<f64>]) -> DVector<f64> {
    let data: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    DVector::from_vec(data)
}

/// Random point in the bounding boxes of `X × Y × Λ`.
fn box_point(
    problem: &MinimaxBilevelProblem,
    rng: &mut ChaCha8Rng,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let mut draw = |b: &mmbo::geometry::BoxSet| {
        DVector::from_fn(b.dim(), |i, _| {
            let (lo, hi) = (b.lb[i].max(-10.0), b.ub[i].min(10.0));
            rng.random_range(lo..=hi)
        })
    };
    (
        draw(problem.set_x.bounds()),
        draw(problem.set_y.bounds()),
        draw(problem.set_lambda.bounds()),
    )
}

fn test_problems() -> Vec<MinimaxBilevelProblem> {
    let (linear, _) = gen_linear_instance(
        LinearDims {
            dx: 6,
            dy: 4,
            dl: 4,
        },
        3,
        &LinearRecipe::default(),
    )
    .unwrap();
    vec![
        ex61(),
        ex62(),
        ex63(),
        linear,
        random_quadratic((3, 2, 2), 11).problem,
    ]
}

#[test]
fn ex62_values_at_the_saddle_point() {
    let p = ex62();
    let (x, y, l) = (v(&[1.0]), v(&[1.0]), v(&[-2.0]));
    assert_relative_eq!(p.eval_f(&x, &y, &l).unwrap(), 2.0, epsilon = 1e-14);
    let (gx, gy, gl) = p.eval_f_grads(&x, &y, &l).unwrap();
    for g in [gx, gy, gl] {
        assert!(g.norm() <= 1e-14);
    }
}

#[test]
fn lower_level_values_at_hand_points() {
    let p = ex61();
    assert_relative_eq!(
        p.eval_g(&v(&[0.5]), &v(&[0.5])).unwrap(),
        0.375,
        epsilon = 1e-15
    );
    let (gz, gl) = p.eval_g_grads(&v(&[0.5]), &v(&[0.5])).unwrap();
    assert_relative_eq!(gz[0], 1.0, epsilon = 1e-15);
    assert_relative_eq!(gl[0], 0.5, epsilon = 1e-15);

    let p = ex63();
    let one = v(&[1.0, 1.0]);
    assert_relative_eq!(p.eval_g(&one, &one).unwrap(), -4.0, epsilon = 1e-14);
}

#[test]
fn zero_multiplier_leaves_the_upper_objective() {
    for p in test_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y, _) = box_point(&p, &mut rng);
        let zero = DVector::zeros(p.dims.dl);
        assert_eq!(p.eval_f(&x, &y, &zero).unwrap(), p.fbar.value(&x, &y));
        let (_, _, gl) = p.eval_f_grads(&x, &y, &zero).unwrap();
        assert_eq!(gl, p.coupling(&x, &y));
    }
}

#[test]
fn dimension_mismatches_are_rejected() {
    let p = ex63();
    let two = v(&[0.0, 0.0]);
    let three = v(&[0.0, 0.0, 0.0]);
    assert!(matches!(
        p.eval_f(&three, &two, &two),
        Err(MmboError::Dimension { .. })
    ));
    assert!(matches!(
        p.eval_g_grads(&two, &three),
        Err(MmboError::Dimension { .. })
    ));
    assert!(matches!(
        p.lipschitz_constants(0.0),
        Err(MmboError::InvalidParameter(_))
    ));
}

#[test]
fn gradients_match_central_differences() {
    let h = 1e-6;
    for p in test_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (dx, dy) = (p.dims.dx, p.dims.dy);
        for _ in 0..100 {
            let (x, y, l) = box_point(&p, &mut rng);
            let split = |s: &DVector<f64>| {
                (
                    s.rows(0, dx).into_owned(),
                    s.rows(dx, dy).into_owned(),
                    s.rows(dx + dy, p.dims.dl).into_owned(),
                )
            };
            let f = |s: &DVector<f64>| {
                let (a, b, c) = split(s);
                p.eval_f(&a, &b, &c).unwrap()
            };
            let (gx, gy, gl) = p.eval_f_grads(&x, &y, &l).unwrap();
            let grad = stack(&[&gx, &gy, &gl]);
            let fd = central_diff(&f, &stack(&[&x, &y, &l]), h);
            assert!(
                (&grad - &fd).norm() / grad.norm().max(1.0) <= 1e-5,
                "{}: f gradient off by {:.3e}",
                p.name,
                (&grad - &fd).norm()
            );

            let g = |s: &DVector<f64>| {
                p.eval_g(
                    &s.rows(0, dy).into_owned(),
                    &s.rows(dy, p.dims.dl).into_owned(),
                )
                .unwrap()
            };
            let (gz, gl) = p.eval_g_grads(&y, &l).unwrap();
            let grad = stack(&[&gz, &gl]);
            let fd = central_diff(&g, &stack(&[&y, &l]), h);
            assert!(
                (&grad - &fd).norm() / grad.norm().max(1.0) <= 1e-5,
                "{}: g gradient off by {:.3e}",
                p.name,
                (&grad - &fd).norm()
            );
        }
    }
}

#[test]
fn gradient_of_f_is_lipschitz_with_the_reported_constant() {
    for p in test_problems() {
        let lf = p.lipschitz_constants(1.0).unwrap().lf;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let (x1, y1, l1) = box_point(&p, &mut rng);
            let (x2, y2, l2) = box_point(&p, &mut rng);
            let (a1, b1, c1) = p.eval_f_grads(&x1, &y1, &l1).unwrap();
            let (a2, b2, c2) = p.eval_f_grads(&x2, &y2, &l2).unwrap();
            let dg = (stack(&[&a1, &b1, &c1]) - stack(&[&a2, &b2, &c2])).norm();
            let dp = (stack(&[&x1, &y1, &l1]) - stack(&[&x2, &y2, &l2])).norm();
            assert!(dg <= lf * dp + 1e-9, "{}: {dg} > {lf}·{dp}", p.name);
        }
    }
}

#[test]
fn lower_objective_is_convex_in_z() {
    for p in test_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (_, z1, l) = box_point(&p, &mut rng);
            let (_, z2, _) = box_point(&p, &mut rng);
            let mid = (&z1 + &z2) * 0.5;
            let lhs = p.eval_g(&mid, &l).unwrap();
            let rhs = 0.5 * p.eval_g(&z1, &l).unwrap() + 0.5 * p.eval_g(&z2, &l).unwrap();
            assert!(lhs <= rhs + 1e-12, "{}: {lhs} > {rhs}", p.name);
        }
    }
}

#[test]
fn linear_problem_is_affine_per_block() {
    let (p, data) = gen_linear_instance(
        LinearDims {
            dx: 4,
            dy: 3,
            dl: 3,
        },
        9,
        &LinearRecipe::default(),
    )
    .unwrap();
    assert_eq!(p.fbar.lipschitz_grad(), 0.0);
    assert_relative_eq!(p.g.lipschitz_grad(), 1.0, epsilon = 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x1, y, l) = box_point(&p, &mut rng);
    let (x2, _, _) = box_point(&p, &mut rng);
    let (g1, _, _) = p.eval_f_grads(&x1, &y, &l).unwrap();
    let (g2, _, _) = p.eval_f_grads(&x2, &y, &l).unwrap();
    assert_eq!(g1, g2);
    let want = DVector::from_vec(data.c1.clone()) + p.a.tr_mul(&l);
    assert_relative_eq!(g1, want, epsilon = 1e-12);
}

#[test]
fn scalar_linear_problem_substitutes_directly() {
    let text = r#"{
        "type": "linear",
        "dims": {"dx": 1, "dy": 1, "dl": 1},
        "c1": [1.0], "c2": [1.0],
        "A": [[1.0]], "B": [[1.0]], "b": [1.0],
        "setX": {"box": {"lb": [-1.0], "ub": [1.0]}},
        "setY": {"box": {"lb": [-1.0], "ub": [1.0]}},
        "setLambda": {"box": {"lb": [0.0], "ub": [1.0]}}
    }"#;
    let data = mmbo::harness::LinearProblemData::from_json(text).unwrap();
    let p = build_linear_problem(&data).unwrap();
    let (x, y, l) = (v(&[0.3]), v(&[-0.7]), v(&[0.6]));
    assert_relative_eq!(
        p.eval_f(&x, &y, &l).unwrap(),
        0.3 + 0.6 * (0.3 - 0.7 - 1.0),
        epsilon = 1e-15
    );
    assert_relative_eq!(
        p.eval_g(&y, &l).unwrap(),
        -0.7 + 0.6 * -0.7,
        epsilon = 1e-15
    );
}

#[test]
fn lipschitz_constants_follow_the_formula() {
    let p = ex62();
    let lip = p.lipschitz_constants(10.0).unwrap();
    let (na, nb) = p.coupling_norms();
    assert_relative_eq!(lip.lf, p.fbar.lipschitz_grad() + na + nb, epsilon = 1e-12);
    assert_relative_eq!(lip.lp, lip.lf + 20.0 * lip.lg, epsilon = 1e-12);
}

#[test]
fn power_iteration_matches_svd_on_a_large_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = DMatrix::from_fn(50, 50, |_, _| rng.random_range(-1.0..1.0));
    let want = a.clone().svd(false, false).singular_values.max();
    let got = spectral_norm(&a, mmbo::model::POWER_MAX_ITER, mmbo::model::POWER_TOL);
    assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
}

#[test]
fn ex61_bounds_match_corner_enumeration() {
    let est = ex61().estimate_bounds(1, 0).unwrap();
    assert!(est.corners_exhaustive);
    assert_relative_eq!(est.f_hi, 2.0, epsilon = 1e-12);
    assert_relative_eq!(est.f_low, -1.0, epsilon = 1e-12);
    assert_relative_eq!(est.g_hi, 1.5, epsilon = 1e-12);
    assert_relative_eq!(est.g_low, 0.0, epsilon = 1e-12);
    assert!(matches!(
        ex61().estimate_bounds(0, 0),
        Err(MmboError::InvalidParameter(_))
    ));
}
