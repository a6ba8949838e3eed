//! Benchmark problems, the random linear instance generator, a brute-force grid oracle and
//! the experiment runner behind the command-line tool.

mod builtins;
mod dispatch;
mod experiment;
mod linear;
mod oracle;

pub use builtins::{builtin_example, ex61, ex62, ex63, BUILTIN_IDS};
pub use dispatch::{dispatch_lite, dispatch_solver_config, DispatchData};
pub use experiment::{
    load_problem, parse_rho_schedule, run_experiment, write_trace_csv, ExperimentConfig,
    ExperimentOutcome, ProblemSource, RunSummary, SolverKind, TRACE_HEADER,
};
pub use linear::{
    build_linear_problem, gen_linear_instance, LinearDims, LinearProblemData, LinearRecipe,
};
pub use oracle::{grid_oracle, OracleResult, MAX_GRID_POINTS};
