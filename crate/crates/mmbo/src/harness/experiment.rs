use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{error, info};
use serde::Serialize;

use super::builtins::builtin_example;
use super::dispatch::{dispatch_lite, dispatch_solver_config};
use super::linear::{build_linear_problem, LinearProblemData};
use super::oracle::{grid_oracle, OracleResult};
use crate::error::{MmboError, Result};
use crate::model::MinimaxBilevelProblem;
use crate::solver::{solve, IterateRecord, RhoSchedule, SolverConfig, SolverTrace};
use crate::stationarity::{check_eps_kkt, GapScales, PrimalPoint};

/// Exact header of trace files.
pub const TRACE_HEADER: &str =
    "iter,rho,f,P_rho,gap_x,gap_y,gap_lambda,gap_z,error,lower_gap,time_ms";

/// Where a problem comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProblemSource {
    /// `ex61`, `ex62` or `ex63`.
    Builtin(String),
    /// The dispatch instance drawn from the given seed.
    Dispatch(u64),
    /// A linear problem JSON file.
    File(PathBuf),
}

impl ProblemSource {
    /// Parses `builtin:ex61`, `ex61`, `builtin:dispatch` or a path.
    pub fn parse(spec: &str) -> Self {
        let id = spec.strip_prefix("builtin:").unwrap_or(spec);
        match id {
            "dispatch" => ProblemSource::Dispatch(0),
            "ex61" | "ex62" | "ex63" => ProblemSource::Builtin(id.to_string()),
            _ if spec.starts_with("builtin:") => ProblemSource::Builtin(id.to_string()),
            _ => ProblemSource::File(PathBuf::from(spec)),
        }
    }

    /// Settings matched to the problem family.
    pub fn default_config(&self) -> SolverConfig {
        match self {
            ProblemSource::Builtin(_) => SolverConfig::examples(),
            ProblemSource::Dispatch(_) => dispatch_solver_config(),
            ProblemSource::File(_) => SolverConfig::linear(),
        }
    }
}

/// Materializes a problem.
pub fn load_problem(source: &ProblemSource) -> Result<MinimaxBilevelProblem> {
    match source {
        ProblemSource::Builtin(id) => builtin_example(id),
        ProblemSource::Dispatch(seed) => dispatch_lite(*seed),
        ProblemSource::File(path) => {
            let text = fs::read_to_string(path)?;
            build_linear_problem(&LinearProblemData::from_json(&text)?)
        }
    }
}

/// Parses `geometric:F` (`ρ_j = F^{j−1}`) or `fixed:R` with the given cap.
pub fn parse_rho_schedule(spec: &str, cap: f64) -> Result<RhoSchedule> {
    let bad = || {
        MmboError::InvalidParameter(format!(
            "bad rho schedule {spec:?}; expected geometric:F or fixed:R"
        ))
    };
    let (kind, value) = spec.split_once(':').ok_or_else(bad)?;
    let value: f64 = value.parse().map_err(|_| bad())?;
    if !(value > 0.0 && cap > 0.0) {
        return Err(bad());
    }
    match kind {
        "geometric" if value > 1.0 => Ok(RhoSchedule::Geometric {
            start: 1.0 / value,
            factor: value,
            cap,
        }),
        "fixed" => Ok(RhoSchedule::Fixed(value.min(cap))),
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolverKind {
    #[serde(rename = "pgmad")]
    PgMad,
    #[serde(rename = "napgmad")]
    NaPgMad,
}

impl SolverKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pgmad" => Ok(SolverKind::PgMad),
            "napgmad" => Ok(SolverKind::NaPgMad),
            other => Err(MmboError::InvalidParameter(format!(
                "unknown solver {other:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::PgMad => "pgmad",
            SolverKind::NaPgMad => "napgmad",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: ProblemSource,
    pub solver: SolverKind,
    pub config: SolverConfig,
    pub out_dir: PathBuf,
    /// Runs with seeds `seed, seed + 1, …`.
    pub repetitions: usize,
    pub seed: u64,
    /// Grid oracle resolution for the summary comparison.
    pub oracle_resolution: Option<usize>,
    /// Tolerance of the terminal ε-KKT check.
    pub kkt_epsilon: f64,
}

impl ExperimentConfig {
    pub fn new(source: ProblemSource, solver: SolverKind, out_dir: impl Into<PathBuf>) -> Self {
        let config = source.default_config();
        Self {
            source,
            solver,
            kkt_epsilon: config.stopping.error_tol,
            config,
            out_dir: out_dir.into(),
            repetitions: 1,
            seed: 0,
            oracle_resolution: None,
        }
    }
}

/// Terminal summary of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub problem: String,
    pub solver: SolverKind,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub inner_steps: usize,
    pub wall_ms: f64,
    pub rho: f64,
    pub point: PrimalPoint,
    pub kkt: serde_json::Value,
    pub eps_kkt: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleComparison>,
    pub trace_file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub oracle: OracleResult,
    pub f_terminal: f64,
    pub difference: f64,
}

/// Exit code and summaries of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// `0` on success, `1` on solver failure, `2` on I/O failure.
    pub exit_code: i32,
    pub summaries: Vec<RunSummary>,
    pub files: Vec<PathBuf>,
    pub message: Option<String>,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the trace as CSV with [`TRACE_HEADER`] and 17 significant digits.
pub fn write_trace_csv(path: &Path, records: &[IterateRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        let vals = [
            r.rho,
            r.f_value,
            r.p_rho_value,
            r.gap_x,
            r.gap_y,
            r.gap_lambda,
            r.gap_z,
            r.error,
            r.lower_gap,
            r.elapsed_ms,
        ];
        let row: Vec<String> = vals.iter().map(|v| fmt17(*v)).collect();
        writeln!(out, "{},{}", r.k, row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Two-column `iter value` files for plotting the error and the lower-level gap.
fn write_plot_data(dir: &Path, stem: &str, records: &[IterateRecord]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (name, pick) in [
        (
            "error",
            (|r: &IterateRecord| r.error) as fn(&IterateRecord) -> f64,
        ),
        ("lower_gap", |r: &IterateRecord| r.lower_gap),
    ] {
        let path = dir.join(format!("{stem}_{name}.dat"));
        let mut out = std::io::BufWriter::new(fs::File::create(&path)?);
        writeln!(out, "# iter {name}")?;
        for r in records {
            writeln!(out, "{} {}", r.k, fmt17(pick(r)))?;
        }
        out.flush()?;
        files.push(path);
    }
    Ok(files)
}

fn summarize(
    problem: &MinimaxBilevelProblem,
    cfg: &ExperimentConfig,
    seed: u64,
    trace: &SolverTrace,
    wall_ms: f64,
    oracle: Option<&OracleResult>,
    trace_file: &Path,
) -> Result<RunSummary> {
    let s = &trace.state;
    let point = PrimalPoint::new(&s.x, &s.y, &s.lambda, &s.z);
    let scales = GapScales::from_params(&trace.params);
    let kkt = check_eps_kkt(problem, trace.params.rho, &point, cfg.kkt_epsilon, &scales)?;
    let f_terminal = problem.eval_f(&s.x, &s.y, &s.lambda)?;
    Ok(RunSummary {
        problem: problem.name.clone(),
        solver: cfg.solver,
        seed,
        converged: trace.converged(),
        iterations: trace.iterations(),
        inner_steps: trace.total_inner_steps(),
        wall_ms,
        rho: trace.params.rho,
        point,
        eps_kkt: kkt.verdict,
        kkt: kkt.to_json(),
        oracle: oracle.map(|o| OracleComparison {
            oracle: o.clone(),
            f_terminal,
            difference: f_terminal - o.phi_star,
        }),
        trace_file: trace_file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    })
}

enum RunError {
    Io(String),
    Solver(String),
}

fn classify(e: MmboError) -> RunError {
    match e {
        MmboError::Io(e) => RunError::Io(e.to_string()),
        other => RunError::Solver(other.to_string()),
    }
}

/// Runs every repetition (concurrently), writing `trace[_seedN].csv`, plot data and
/// `summary.json` into `out_dir`, which must already exist.
pub fn run_experiment(cfg: &ExperimentConfig) -> ExperimentOutcome {
    let fail = |code: i32, msg: String| ExperimentOutcome {
        exit_code: code,
        summaries: Vec::new(),
        files: Vec::new(),
        message: Some(msg),
    };
    if !cfg.out_dir.is_dir() {
        return fail(
            2,
            format!("output directory {} does not exist", cfg.out_dir.display()),
        );
    }
    if cfg.repetitions == 0 {
        return fail(1, "repetitions must be at least 1".into());
    }
    let problem = match load_problem(&cfg.source) {
        Ok(p) => p,
        Err(MmboError::Io(e)) => return fail(2, e.to_string()),
        Err(e) => return fail(1, e.to_string()),
    };
    let oracle = match cfg
        .oracle_resolution
        .map(|r| grid_oracle(&problem, r, 1e-9))
    {
        None => None,
        Some(Ok(o)) => Some(o),
        Some(Err(e)) => return fail(1, format!("grid oracle failed: {e}")),
    };

    let seeds: Vec<u64> = (0..cfg.repetitions as u64).map(|i| cfg.seed + i).collect();
    let results: Vec<std::result::Result<(RunSummary, Vec<PathBuf>), RunError>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| {
                    let problem = &problem;
                    let oracle = oracle.as_ref();
                    scope.spawn(
                        move || -> std::result::Result<(RunSummary, Vec<PathBuf>), RunError> {
                            let mut config = cfg.config.clone().with_seed(seed);
                            config.accelerated = cfg.solver == SolverKind::NaPgMad;
                            let started = Instant::now();
                            let trace = solve(problem, &config).map_err(classify)?;
                            let wall_ms = started.elapsed().as_secs_f64() * 1e3;
                            let stem = if cfg.repetitions == 1 {
                                "trace".to_string()
                            } else {
                                format!("trace_seed{seed}")
                            };
                            let csv = cfg.out_dir.join(format!("{stem}.csv"));
                            write_trace_csv(&csv, &trace.records).map_err(classify)?;
                            let mut files = vec![csv.clone()];
                            files.extend(
                                write_plot_data(&cfg.out_dir, &stem, &trace.records)
                                    .map_err(classify)?,
                            );
                            let summary =
                                summarize(problem, cfg, seed, &trace, wall_ms, oracle, &csv)
                                    .map_err(classify)?;
                            Ok((summary, files))
                        },
                    )
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(RunError::Solver("solver thread panicked".into())))
                })
                .collect()
        });

    let mut summaries = Vec::new();
    let mut files = Vec::new();
    let mut exit_code = 0;
    let mut messages = Vec::new();
    for r in results {
        match r {
            Ok((s, f)) => {
                if !(s.converged && s.eps_kkt) {
                    exit_code = exit_code.max(1);
                    messages.push(format!("seed {} did not meet the tolerances", s.seed));
                }
                info!(
                    "{} {} seed {}: converged={} iterations={} eps_kkt={}",
                    s.problem,
                    s.solver.name(),
                    s.seed,
                    s.converged,
                    s.iterations,
                    s.eps_kkt
                );
                summaries.push(s);
                files.extend(f);
            }
            Err(RunError::Io(m)) => {
                exit_code = 2;
                messages.push(m);
            }
            Err(RunError::Solver(m)) => {
                exit_code = exit_code.max(1);
                messages.push(m);
            }
        }
    }
    let summary_path = cfg.out_dir.join("summary.json");
    let body = if cfg.repetitions == 1 && summaries.len() == 1 {
        serde_json::to_string_pretty(&summaries[0])
    } else {
        serde_json::to_string_pretty(&summaries)
    };
    match body
        .map_err(MmboError::from)
        .and_then(|b| fs::write(&summary_path, b).map_err(MmboError::from))
    {
        Ok(()) => files.push(summary_path),
        Err(e) => {
            exit_code = 2;
            messages.push(e.to_string());
        }
    }
    for m in &messages {
        error!("{m}");
    }
    ExperimentOutcome {
        exit_code,
        summaries,
        files,
        message: (!messages.is_empty()).then(|| messages.join("; ")),
    }
}
