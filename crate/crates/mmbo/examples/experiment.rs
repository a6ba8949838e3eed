//! Runs a repeated experiment on the `ex63` built-in through the harness and lists the files it
//! writes: one trace CSV per seed, plot data and a summary JSON.
//!
//! Run with `cargo run --release --example experiment [out_dir]`.

use std::path::PathBuf;

use mmbo::harness::{run_experiment, ExperimentConfig, ProblemSource, SolverKind};

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mmbo-experiment"));
    std::fs::create_dir_all(&out).expect("create output directory");
    let mut cfg = ExperimentConfig::new(
        ProblemSource::Builtin("ex63".into()),
        SolverKind::NaPgMad,
        &out,
    );
    cfg.repetitions = 3;
    cfg.seed = 1;
    cfg.oracle_resolution = Some(41);
    let outcome = run_experiment(&cfg);
    for s in &outcome.summaries {
        println!(
            "seed {} converged={} iterations={} eps_kkt={} wall_ms={:.1}",
            s.seed, s.converged, s.iterations, s.eps_kkt, s.wall_ms
        );
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    std::process::exit(outcome.exit_code);
}
