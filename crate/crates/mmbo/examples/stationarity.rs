//! Certifies a solver output on the `ex62` built-in: the ε-KKT report, the hypergradient residuals
//! and the residuals of the four multiplier systems for the zero certificate.
//!
//! Run with `cargo run --release --example stationarity`.

use mmbo::harness::ex62;
use mmbo::solver::{pg_mad, SolverConfig};
use mmbo::stationarity::{
    check_eps_kkt, h_residual, mpcc_residual, GapScales, MpccCertificate, MpccForm, PrimalPoint,
    StationarityKind,
};

fn main() -> mmbo::Result<()> {
    let problem = ex62();
    let trace = pg_mad(&problem, &SolverConfig::examples().with_seed(1))?;
    let s = &trace.state;
    let point = PrimalPoint::new(&s.x, &s.y, &s.lambda, &s.z);
    let kkt = check_eps_kkt(
        &problem,
        trace.params.rho,
        &point,
        1e-4,
        &GapScales::from_params(&trace.params),
    )?;
    println!("eps-KKT report: {}", kkt.to_json());

    let h = h_residual(&problem, &s.x, &s.lambda, 1e-12)?;
    println!(
        "hypergradient residual: r_x={:.2e} r_lambda={:.2e} y_bar={:.6?} boundary_contact={}",
        h.r_x,
        h.r_lambda,
        h.y_bar.as_slice(),
        h.boundary_contact
    );

    let form = MpccForm::from_problem(&problem);
    let cert = MpccCertificate::zeros(&form);
    for kind in [
        StationarityKind::S,
        StationarityKind::M,
        StationarityKind::C,
        StationarityKind::W,
    ] {
        let report = mpcc_residual(&form, &s.x, &s.y, &s.lambda, &cert, kind)?;
        println!("{kind:?}: max residual {:.2e}", report.max_residual);
        for (name, value) in report.conditions.iter().filter(|c| c.1 > 1e-8) {
            println!("    {name} = {value:.2e}");
        }
    }
    Ok(())
}
