use approx::assert_relative_eq;
use mmbo::harness::{ex61, ex62};
use mmbo::stationarity::{
    check_eps_kkt, composite_error, gap_measures, h_residual, index_sets, mpcc_residual, GapReport,
    GapScales, MpccCertificate, MpccForm, PrimalPoint, StationarityKind,
};
use mmbo::MmboError;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_vec(x.to_vec())
}

fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

#[test]
fn ex62_gaps_match_closed_form() {
    // f = x² + y² + λ(x + y − 2), g = z² + λz.
    let p = ex62();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (x, y, l, z) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-1.0..1.0),
        );
        let rho = rng.random_range(0.1..100.0);
        let s = GapScales {
            lx: rng.random_range(0.5..5.0),
            ly: rng.random_range(0.5..5.0),
            ll: rng.random_range(0.5..5.0),
            lz: rng.random_range(0.5..5.0),
        };
        let r = gap_measures(&p, rho, &v(&[x]), &v(&[y]), &v(&[l]), &v(&[z]), &s).unwrap();
        let px = 2.0 * x + l;
        let py = 2.0 * y + l - rho * (2.0 * y + l);
        let pl = x + y - 2.0 - rho * (y - z);
        let pz = rho * (2.0 * z + l);
        let want = [
            s.lx * (x - clip(x - px / s.lx, -1.0, 1.0)),
            s.ly * (y - clip(y + py / s.ly, -1.0, 1.0)),
            s.ll * (l - clip(l + pl / s.ll, -2.0, 2.0)),
            s.lz * (z - clip(z - pz / s.lz, -1.0, 1.0)),
        ];
        let got = [r.gap_x[0], r.gap_y[0], r.gap_lambda[0], r.gap_z[0]];
        for (g, w) in got.iter().zip(want) {
            assert_relative_eq!(*g, w, epsilon = 1e-12, max_relative = 1e-12);
        }
        let norm = want.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert_relative_eq!(composite_error(&r), norm, max_relative = 1e-12);
    }
}

#[test]
fn gap_measures_reject_bad_scales() {
    let p = ex62();
    let s = GapScales {
        lx: 0.0,
        ly: 1.0,
        ll: 1.0,
        lz: 1.0,
    };
    assert!(gap_measures(&p, 1.0, &v(&[0.0]), &v(&[0.0]), &v(&[0.0]), &v(&[0.0]), &s).is_err());
}

#[test]
fn eps_kkt_verdict_at_and_away_from_solution() {
    let p = ex62();
    let s = GapScales {
        lx: 1.0,
        ly: 1.0,
        ll: 1.0,
        lz: 1.0,
    };
    let at = PrimalPoint::new(&v(&[1.0]), &v(&[1.0]), &v(&[-2.0]), &v(&[1.0]));
    let rep = check_eps_kkt(&p, 100.0, &at, 1e-8, &s).unwrap();
    assert!(rep.verdict, "{:?}", rep.gaps.norms());
    assert!(rep.lower_gap.abs() <= 1e-12);
    let away = PrimalPoint::new(&v(&[0.0]), &v(&[0.0]), &v(&[0.0]), &v(&[0.5]));
    assert!(!check_eps_kkt(&p, 100.0, &away, 1e-4, &s).unwrap().verdict);
    assert!(check_eps_kkt(&p, 1.0, &at, 0.0, &s).is_err());
}

#[test]
fn index_sets_classify_and_reject() {
    let g = v(&[0.0, 0.0, -1.0]);
    let mu = v(&[2.0, 0.0, 0.0]);
    let sets = index_sets(&g, &mu, 1e-8).unwrap();
    assert_eq!(sets.alpha, vec![0]);
    assert_eq!(sets.beta, vec![1]);
    assert_eq!(sets.gamma, vec![2]);
    assert!(matches!(
        index_sets(&v(&[0.1]), &v(&[0.0]), 1e-8),
        Err(MmboError::Classification(_))
    ));
    assert!(matches!(
        index_sets(&v(&[0.0]), &v(&[-0.1]), 1e-8),
        Err(MmboError::Classification(_))
    ));
    assert!(matches!(
        index_sets(&v(&[-1.0]), &v(&[1.0]), 1e-8),
        Err(MmboError::Classification(_))
    ));
}

#[test]
fn ex62_zero_certificate_and_wrong_shapes() {
    let p = ex62();
    let form = MpccForm::from_problem(&p);
    let cert = MpccCertificate::zeros(&form);
    for kind in [
        StationarityKind::S,
        StationarityKind::M,
        StationarityKind::C,
        StationarityKind::W,
    ] {
        let rep = mpcc_residual(&form, &v(&[1.0]), &v(&[1.0]), &v(&[-2.0]), &cert, kind).unwrap();
        assert!(rep.passes(1e-12), "{kind:?}: {:?}", rep.conditions);
    }
    let away = mpcc_residual(
        &form,
        &v(&[0.0]),
        &v(&[0.0]),
        &v(&[0.0]),
        &cert,
        StationarityKind::W,
    )
    .unwrap();
    assert!(!away.passes(1e-3));
    let mut bad = cert.clone();
    bad.mu_y.push(0.0);
    assert!(matches!(
        mpcc_residual(
            &form,
            &v(&[1.0]),
            &v(&[1.0]),
            &v(&[-2.0]),
            &bad,
            StationarityKind::W
        ),
        Err(MmboError::Dimension { .. })
    ));
}

#[test]
fn ex62_h_residual_matches_closed_form() {
    // ȳ(λ) = −λ/2, r_x = |2x + λ|, r_λ = |x − λ/2 − 2|.
    let p = ex62();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..30 {
        let x = rng.random_range(-1.0..1.0);
        let l = rng.random_range(-1.9..1.9);
        let h = h_residual(&p, &v(&[x]), &v(&[l]), 1e-12).unwrap();
        assert_relative_eq!(h.y_bar[0], -l / 2.0, epsilon = 1e-10);
        assert_relative_eq!(h.r_x, (2.0 * x + l).abs(), epsilon = 1e-9);
        assert_relative_eq!(h.r_lambda, (x - l / 2.0 - 2.0).abs(), epsilon = 1e-9);
    }
    let at = h_residual(&p, &v(&[1.0]), &v(&[-2.0]), 1e-12).unwrap();
    assert!(at.boundary_contact);
}

#[test]
fn ex61_gaps_vanish_at_solution() {
    // f = y² + λ(x + y − 1), g = ½z² + λz, solution (x, y, λ) = (1, 0, 0).
    let p = ex61();
    let s = GapScales {
        lx: 1.0,
        ly: 1.0,
        ll: 1.0,
        lz: 1.0,
    };
    let r = gap_measures(&p, 10.0, &v(&[1.0]), &v(&[0.0]), &v(&[0.0]), &v(&[0.0]), &s).unwrap();
    assert!(r.norms().iter().all(|n| *n == 0.0));
}

fn report(parts: [Vec<f64>; 4]) -> GapReport {
    let [a, b, c, d] = parts;
    GapReport {
        gap_x: DVector::from_vec(a),
        gap_y: DVector::from_vec(b),
        gap_lambda: DVector::from_vec(c),
        gap_z: DVector::from_vec(d),
        scales: GapScales {
            lx: 1.0,
            ly: 1.0,
            ll: 1.0,
            lz: 1.0,
        },
    }
}

fn part() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 1..4)
}

proptest! {
    #[test]
    fn composite_error_bounds_and_monotone(a in part(), b in part(), c in part(), d in part(), scale in 1.0..3.0f64) {
        let r = report([a.clone(), b.clone(), c.clone(), d.clone()]);
        let e = composite_error(&r);
        prop_assert!(r.norms().iter().all(|n| *n <= e + 1e-12));
        prop_assert!(e <= r.sum_of_norms() + 1e-12);
        let bigger = report([a.iter().map(|x| x * scale).collect(), b, c, d]);
        prop_assert!(composite_error(&bigger) >= e - 1e-12);
    }
}
