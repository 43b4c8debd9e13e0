//! Experiment orchestration: JSON configuration, multi-seed runs, rate fits
//! and CSV/JSON persistence.

mod config;
mod experiment;
mod record;
mod stats;

pub use config::{
    Algorithm, BatchConfig, DataConfig, ErrorConfig, ExperimentConfig, FitConfig, GradientKind,
    ProblemConfig, QuadraticConfig, ScheduleConfig,
};
pub use experiment::{
    build_problem, compare, run_experiment, summarize, summarize_records, trajectory_path,
    write_output, Aggregate, BuiltProblem, CompareEntry, CompareReport, Experiment,
    ExperimentOutput, SeedRun, SeedSummary, Summary, SUMMARY_FILE,
};
pub use record::{
    load_trajectory, read_csv, save_trajectory, write_csv, Status, TrajectoryRecord, CSV_HEADER,
};
pub use stats::{
    fit_power_law, fit_rate, mean_curve, median, plateau_level, quantile, zero_crossings, Field,
    RateFit, DEFAULT_BURN_IN_FRACTION, MIN_FIT_POINTS,
};
