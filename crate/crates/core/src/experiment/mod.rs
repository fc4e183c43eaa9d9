//! Configuration, orchestration, output files and plots.

mod check;
mod config;
mod plot;
mod run;

pub use check::{run_invariant_suite, CheckResult};
pub use config::{
    parse_config, parse_config_file, ExperimentConfig, Mode, ParticleInit, DEFAULT_AMPLITUDE,
    DEFAULT_CFL, DEFAULT_CUTOFF, DEFAULT_PARTICLES, DEFAULT_STEP_SIZE,
};
pub use plot::{emit_plots, PlotStyle};
pub use run::{
    expected_l2_slope, linearized_rows, linearized_solver_deviation, meanfield_problem, meanfield_rate,
    run_experiment, run_sweep, single_mode_perturbation, sweep_configs, write_report, RunSummary,
    SweepSummary, LINEARIZED_TOL,
};
