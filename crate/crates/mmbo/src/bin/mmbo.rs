use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmbo::harness::{
    gen_linear_instance, grid_oracle, load_problem, parse_rho_schedule, run_experiment,
    ExperimentConfig, LinearDims, LinearRecipe, ProblemSource, SolverKind,
};
use mmbo::solver::{RhoAdvance, StepSize};
use mmbo::stationarity::{check_eps_kkt, GapScales, PrimalPoint};
use mmbo::MmboError;

#[derive(Parser)]
#[command(
    name = "mmbo",
    version,
    about = "Pessimistic minimax bilevel solvers and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write trace.csv and summary.json into --out.
    Solve(SolveArgs),
    /// Generate a random linear instance as JSON.
    GenLinear {
        #[arg(long)]
        dx: usize,
        #[arg(long)]
        dy: usize,
        #[arg(long)]
        dl: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Standard deviation of the inequality slack noise.
        #[arg(long, default_value_t = 0.1)]
        noise_sd: f64,
        /// Equality rows per set (default: square blocks).
        #[arg(long)]
        eq_rows: Option<usize>,
    },
    /// Certify a point as ε-KKT and print the report as JSON.
    Check {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        point: PathBuf,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        eps: f64,
    },
    /// Run a benchmark suite with both solvers.
    Bench {
        #[arg(long, value_parser = ["examples", "linear"])]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Brute-force grid estimate of the optimal pessimistic value.
    Oracle {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        resolution: usize,
        #[arg(long, default_value_t = 1e-9)]
        feasibility_tol: f64,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value = "pgmad", value_parser = ["pgmad", "napgmad"])]
    solver: String,
    /// `geometric:F` or `fixed:R`.
    #[arg(long)]
    rho_schedule: Option<String>,
    #[arg(long)]
    rho_cap: Option<f64>,
    /// Advance ρ after every iteration instead of on approximate stationarity.
    #[arg(long)]
    rho_per_iteration: bool,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    ax: Option<f64>,
    #[arg(long)]
    ay: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Compare against the grid oracle at this resolution.
    #[arg(long)]
    oracle_resolution: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn solve_config(args: &SolveArgs) -> Result<ExperimentConfig, MmboError> {
    let source = ProblemSource::parse(&args.problem);
    let mut cfg = ExperimentConfig::new(source, SolverKind::parse(&args.solver)?, &args.out);
    let c = &mut cfg.config;
    if let Some(cap) = args.rho_cap {
        c.stopping.rho_cap = cap;
        c.schedule = match c.schedule {
            mmbo::solver::RhoSchedule::Geometric { start, factor, .. } => {
                mmbo::solver::RhoSchedule::Geometric { start, factor, cap }
            }
            mmbo::solver::RhoSchedule::Fixed(r) => mmbo::solver::RhoSchedule::Fixed(r.min(cap)),
        };
    }
    if let Some(spec) = &args.rho_schedule {
        c.schedule = parse_rho_schedule(spec, c.stopping.rho_cap)?;
        c.stopping.rho_cap = c.schedule.cap();
    }
    if args.rho_per_iteration {
        c.advance = RhoAdvance::PerIteration;
    }
    if let Some(t) = args.t {
        c.inner_steps = t;
    }
    if let Some(ax) = args.ax {
        c.steps.alpha_x = StepSize::Absolute(ax);
    }
    if let Some(ay) = args.ay {
        c.steps.alpha_y = StepSize::Absolute(ay);
    }
    c.theta_override = args.theta.or(c.theta_override);
    if let Some(eps) = args.eps {
        c.stopping.error_tol = eps;
        cfg.kkt_epsilon = eps;
    }
    if let Some(k) = args.max_outer {
        cfg.config.stopping.max_outer = k;
    }
    cfg.seed = args.seed;
    cfg.repetitions = args.repetitions;
    cfg.oracle_resolution = args.oracle_resolution;
    Ok(cfg)
}

fn report(outcome: &mmbo::harness::ExperimentOutcome) -> ExitCode {
    for s in &outcome.summaries {
        println!(
            "{} {} seed={} converged={} iterations={} eps_kkt={} wall_ms={:.1}",
            s.problem,
            s.solver.name(),
            s.seed,
            s.converged,
            s.iterations,
            s.eps_kkt,
            s.wall_ms
        );
    }
    if let Some(m) = &outcome.message {
        eprintln!("mmbo: {m}");
    }
    ExitCode::from(outcome.exit_code as u8)
}

fn run(cli: Cli) -> Result<ExitCode, MmboError> {
    match cli.command {
        Command::Solve(args) => Ok(report(&run_experiment(&solve_config(&args)?))),
        Command::GenLinear {
            dx,
            dy,
            dl,
            seed,
            out,
            noise_sd,
            eq_rows,
        } => {
            let recipe = LinearRecipe {
                noise_sd,
                eq_rows,
                ..LinearRecipe::default()
            };
            let (_, data) = gen_linear_instance(LinearDims { dx, dy, dl }, seed, &recipe)?;
            std::fs::write(&out, data.to_json()?)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            problem,
            point,
            rho,
            eps,
        } => {
            let source = ProblemSource::parse(&problem);
            let p = load_problem(&source)?;
            let pt: PrimalPoint = serde_json::from_str(&std::fs::read_to_string(point)?)?;
            let params = source.default_config().steps.params(&p, rho)?;
            let report = check_eps_kkt(&p, rho, &pt, eps, &GapScales::from_params(&params))?;
            println!("{}", serde_json::to_string_pretty(&report.to_json())?);
            Ok(if report.verdict {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Bench { suite, seed, out } => {
            if !out.is_dir() {
                eprintln!("mmbo: output directory {} does not exist", out.display());
                return Ok(ExitCode::from(2));
            }
            let mut sources = Vec::new();
            if suite == "examples" {
                for id in ["ex61", "ex62", "ex63"] {
                    sources.push((id.to_string(), ProblemSource::Builtin(id.into())));
                }
            } else {
                let dims = LinearDims {
                    dx: 100,
                    dy: 50,
                    dl: 50,
                };
                let (_, data) = gen_linear_instance(dims, seed, &LinearRecipe::default())?;
                let path = out.join("linear_problem.json");
                std::fs::write(&path, data.to_json()?)?;
                sources.push(("linear".to_string(), ProblemSource::File(path)));
            }
            let mut code = 0u8;
            for (name, source) in sources {
                for solver in [SolverKind::PgMad, SolverKind::NaPgMad] {
                    let dir = out.join(format!("{name}_{}", solver.name()));
                    std::fs::create_dir_all(&dir)?;
                    let mut cfg = ExperimentConfig::new(source.clone(), solver, dir);
                    cfg.seed = seed;
                    let exit = report(&run_experiment(&cfg));
                    if exit != ExitCode::SUCCESS {
                        code = 1;
                    }
                }
            }
            Ok(ExitCode::from(code))
        }
        Command::Oracle {
            problem,
            resolution,
            feasibility_tol,
        } => {
            let p = load_problem(&ProblemSource::parse(&problem))?;
            let r = grid_oracle(&p, resolution, feasibility_tol)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MMBO_LOG", "error")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mmbo: {e}");
            match e {
                MmboError::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
