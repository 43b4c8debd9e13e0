use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{
    Algorithm, DataConfig, ExperimentConfig, GradientKind, ProblemConfig, QuadraticConfig,
};
use super::record::{save_trajectory, Status, TrajectoryRecord};
use super::stats::{
    fit_power_law, fit_rate, mean_curve, median, quantile, zero_crossings, Field, RateFit,
};
use crate::lyapunov::{energy_snapshot, EnergyContext};
use crate::optim::{
    run, BatchRule, BatchRules, ErrorInjector, GradientSource, Method, OptimizerState,
    PowerLawErrors, ScheduleSet, StepReport, StepRule, Stepper, ZeroErrors,
};
use crate::problems::{
    generate_classification, generate_regression, make_quadratic, DeterministicOracle,
    GaussianDataset, Problem, StochasticOracle,
};
use crate::rng::SampleStream;
use crate::{Error, Point, Result};

/// A constructed objective with its sampling oracle.
#[derive(Clone)]
pub struct BuiltProblem {
    pub problem: Arc<dyn Problem>,
    pub oracle: Arc<dyn StochasticOracle>,
    pub default_x0: Point,
    /// Unit eigenvector of the largest curvature, for quadratic objectives.
    pub stiff_direction: Option<Point>,
}

fn config_err(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {e}"))
}

fn dataset(cfg: &DataConfig) -> Result<GaussianDataset> {
    let mut ds = match &cfg.dataset {
        Some(spec) => {
            if cfg.dim.is_some()
                || cfg.outputs.is_some()
                || cfg.n_samples.is_some()
                || cfg.data_seed.is_some()
            {
                return Err(config_err(
                    "problem.dataset",
                    "give either an explicit dataset or dim/outputs/n_samples/data_seed",
                ));
            }
            GaussianDataset::new(spec).map_err(|e| config_err("problem.dataset", e))?
        }
        None => {
            let dim = cfg.dim.unwrap_or(6);
            let outputs = cfg.outputs.unwrap_or(1);
            if dim == 0 || outputs == 0 {
                return Err(config_err("problem.dim", "dimensions must be positive"));
            }
            GaussianDataset::standard(
                dim,
                outputs,
                cfg.n_samples.unwrap_or(10_000),
                cfg.data_seed.unwrap_or(0),
            )
        }
    };
    if let Some(tau) = cfg.noise_std {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(config_err("problem.noise_std", "must be finite and >= 0"));
        }
        ds = ds.with_noise_std(tau);
    }
    if let Some(c) = cfg.condition_number {
        ds = ds
            .with_condition_number(c)
            .map_err(|e| config_err("problem.condition_number", e))?;
    }
    Ok(ds)
}

fn quadratic(cfg: &QuadraticConfig) -> Result<Arc<dyn Problem>> {
    let a = match (&cfg.diagonal, &cfg.matrix) {
        (Some(d), None) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        (None, Some(rows)) => {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(config_err("problem.matrix", "must be square"));
            }
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        }
        _ => {
            return Err(config_err(
                "problem",
                "give exactly one of `diagonal` and `matrix`",
            ))
        }
    };
    if a.nrows() == 0 {
        return Err(config_err("problem", "empty matrix"));
    }
    let b = match &cfg.linear {
        Some(b) => DVector::from_column_slice(b),
        None => DVector::zeros(a.nrows()),
    };
    let q = make_quadratic(a, b).map_err(|e| config_err("problem", e))?;
    Ok(Arc::new(q))
}

/// Builds the objective and oracle described by `cfg`.
pub fn build_problem(cfg: &ProblemConfig) -> Result<BuiltProblem> {
    let (problem, oracle): (Arc<dyn Problem>, Arc<dyn StochasticOracle>) = match cfg {
        ProblemConfig::Quadratic(q) => {
            let p = quadratic(q)?;
            (p.clone(), Arc::new(DeterministicOracle::new(p)))
        }
        ProblemConfig::Regression(d) => {
            let (risk, oracle) =
                generate_regression(&dataset(d)?).map_err(|e| config_err("problem", e))?;
            let oracle = oracle
                .with_sampling(d.sampling)
                .map_err(|e| config_err("problem.sampling", e))?;
            (Arc::new(risk), Arc::new(oracle))
        }
        ProblemConfig::Classification(d) => {
            let (risk, oracle) =
                generate_classification(&dataset(d)?).map_err(|e| config_err("problem", e))?;
            (Arc::new(risk), Arc::new(oracle.with_sampling(d.sampling)))
        }
    };
    let dim = problem.dim();
    let default_x0 = match cfg {
        ProblemConfig::Quadratic(_) => Point::from_element(dim, 1.0),
        _ => Point::zeros(dim),
    };
    let stiff_direction = problem.quadratic_form().map(|(a, _)| {
        let eig = SymmetricEigen::new(a);
        let top = eig.eigenvalues.imax();
        eig.eigenvectors.column(top).into_owned()
    });
    Ok(BuiltProblem {
        problem,
        oracle,
        default_x0,
        stiff_direction,
    })
}

/// One configured algorithm on one built problem, ready to run seeds.
#[derive(Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    built: Arc<BuiltProblem>,
    stepper: Stepper,
    ctx: EnergyContext,
    x0: Point,
    sampled: bool,
    stream_salt: Option<u64>,
}

impl Experiment {
    /// Validates `config` against every module's preconditions.
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let built = build_problem(&config.problem)?;
        Self::with_problem(config, Arc::new(built))
    }

    /// Reuses an already built problem (its description in `config` is
    /// ignored).
    pub fn with_problem(config: &ExperimentConfig, built: Arc<BuiltProblem>) -> Result<Self> {
        if config.seeds.is_empty() {
            return Err(config_err("seeds", "at least one seed is required"));
        }
        if config.max_iter == 0 {
            return Err(config_err("max_iter", "must be positive"));
        }
        if config.record_every == 0 {
            return Err(config_err("record_every", "must be positive"));
        }
        let kind = config.gradient_kind();
        match (config.algorithm, kind) {
            (Algorithm::Igahd, GradientKind::Sampled) => {
                return Err(config_err(
                    "algorithm",
                    "igahd uses exact gradients; use sigahd for sampled ones",
                ))
            }
            (Algorithm::Sigahd, GradientKind::Exact) => {
                return Err(config_err(
                    "algorithm",
                    "sigahd uses sampled gradients; use igahd for exact ones",
                ))
            }
            _ => {}
        }
        let problem = built.problem.clone();
        let dim = problem.dim();
        let x0 = match &config.x0 {
            Some(v) if v.len() != dim => {
                return Err(config_err(
                    "x0",
                    format!("length {} does not match dimension {dim}", v.len()),
                ))
            }
            Some(v) => Point::from_column_slice(v),
            None => built.default_x0.clone(),
        };

        let sc = &config.schedule;
        let lipschitz = problem.lipschitz();
        let s0 = sc.s0.unwrap_or(1.0 / lipschitz);
        let step = match (sc.step_offset, sc.step_exponent) {
            (0, 0.0) => StepRule::Constant(s0),
            (0, p) => StepRule::Power { s0, exponent: p },
            (1, p) => StepRule::ShiftedPower { s0, exponent: p },
            _ => return Err(config_err("schedule.step_offset", "must be 0 or 1")),
        };
        if sc.eta < 0.0 || !sc.eta.is_finite() {
            return Err(config_err("schedule.eta", "must be finite and >= 0"));
        }
        // Zero damping runs through the FISTA stepper; the placeholder keeps
        // the remaining schedule checks active.
        let undamped = sc.eta == 0.0;
        let eta = if undamped { 0.5 } else { sc.eta };
        let schedule = match kind {
            GradientKind::Exact => ScheduleSet::deterministic(sc.alpha, eta, step),
            GradientKind::Sampled => {
                let b = &sc.batch;
                let rule = BatchRule {
                    coefficient: b.coefficient,
                    exponent: b.exponent,
                    min: b.min,
                    max: b.max,
                };
                ScheduleSet::stochastic(
                    sc.alpha,
                    eta,
                    step,
                    BatchRules::uniform(rule),
                    sc.allow_boundary_eta,
                )
            }
        }
        .and_then(|s| s.validate_step_bound(lipschitz).map(|_| s))
        .map_err(|e| config_err("schedule", e))?;

        let source = match kind {
            GradientKind::Exact => {
                let injector: Arc<dyn ErrorInjector> = match &config.errors {
                    Some(e) => {
                        if !(e.scale >= 0.0 && e.scale.is_finite() && e.exponent.is_finite()) {
                            return Err(config_err(
                                "errors",
                                "scale must be >= 0 and exponent finite",
                            ));
                        }
                        Arc::new(PowerLawErrors::new(e.scale, e.exponent))
                    }
                    None => Arc::new(ZeroErrors),
                };
                GradientSource::Exact { problem, injector }
            }
            GradientKind::Sampled => {
                if config.errors.is_some() {
                    return Err(config_err("errors", "injected errors need exact gradients"));
                }
                GradientSource::Sampled(built.oracle.clone())
            }
        };
        let method = match config.algorithm {
            Algorithm::Igahd | Algorithm::Sigahd if undamped => Method::Fista,
            Algorithm::Igahd | Algorithm::Sigahd => Method::Igahd,
            Algorithm::Sfista => Method::Fista,
            Algorithm::Shbf => Method::HeavyBall {
                damping: sc.hbf_damping,
            },
        };
        let stepper = Stepper::new(method, source, schedule)
            .map_err(|e| config_err("schedule.hbf_damping", e))?;
        let ctx = EnergyContext::new(built.problem.as_ref(), None)?;
        Ok(Self {
            config: config.clone(),
            built,
            stepper,
            ctx,
            x0,
            sampled: kind == GradientKind::Sampled,
            stream_salt: None,
        })
    }

    /// Draws this experiment's samples from a salted stream instead of the
    /// seed's shared one.
    pub fn unpaired(mut self, salt: u64) -> Self {
        self.stream_salt = Some(salt);
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn problem(&self) -> &Arc<dyn Problem> {
        &self.built.problem
    }

    pub fn built(&self) -> &Arc<BuiltProblem> {
        &self.built
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn energy_context(&self) -> &EnergyContext {
        &self.ctx
    }

    pub fn x0(&self) -> &Point {
        &self.x0
    }

    fn row(
        &self,
        state: &OptimizerState,
        report: Option<&StepReport>,
        schedule: &ScheduleSet,
    ) -> TrajectoryRecord {
        let k = state.k;
        let nan = f64::NAN;
        if !state.is_finite() {
            return TrajectoryRecord {
                k,
                objective_gap: nan,
                grad_norm_x: nan,
                grad_norm_y: nan,
                velocity: nan,
                step_size: schedule.step(k),
                batch_x: 0,
                batch_xm: 0,
                batch_y: 0,
                lyapunov: nan,
                sigma_x: nan,
                sigma_xm: nan,
                sigma_y: nan,
                status: Status::Diverged,
            };
        }
        let problem = self.built.problem.as_ref();
        let snap = energy_snapshot(state, schedule, problem, &self.ctx);
        let norm = |p: &Option<Point>| p.as_ref().map_or(nan, |v| v.norm());
        let (grad_norm_y, batch, sigma) = match report {
            Some(r) => {
                let e = r.errors_against(problem);
                (
                    problem.gradient(&r.y).norm(),
                    r.batch,
                    (norm(&e.x), norm(&e.x_prev), norm(&e.y)),
                )
            }
            None => (nan, (0, 0, 0), (nan, nan, nan)),
        };
        TrajectoryRecord {
            k,
            objective_gap: snap.gap,
            grad_norm_x: problem.gradient(&state.x_curr).norm(),
            grad_norm_y,
            velocity: k as f64 * (&state.x_curr - &state.x_prev).norm(),
            step_size: schedule.step(k),
            batch_x: batch.0,
            batch_xm: batch.1,
            batch_y: batch.2,
            lyapunov: if self.sampled {
                snap.v_stoch
            } else {
                snap.e_hat
            },
            sigma_x: sigma.0,
            sigma_xm: sigma.1,
            sigma_y: sigma.2,
            status: Status::Ok,
        }
    }

    /// Runs one seed. Rows are kept at `k = 1`, at multiples of
    /// `record_every` and at the final iterate.
    pub fn run_seed(&self, seed: u64) -> Result<SeedRun> {
        let every = self.config.record_every;
        let schedule = self.stepper.effective_schedule();
        let mut stream = SampleStream::new(seed);
        if let Some(salt) = self.stream_salt {
            stream = stream.fork(salt);
        }
        let mut initial = OptimizerState::new(self.x0.clone());
        if self.sampled {
            initial = initial.with_stream(stream);
        }
        let probe_dir = self.built.stiff_direction.as_ref();
        let x_star = self.ctx.x_star().clone();
        let probe_of = |x: &Point| probe_dir.map(|u| (x - &x_star).dot(u));

        let mut records = Vec::new();
        let mut probe = Vec::new();
        probe.extend(probe_of(&initial.x_curr));
        let trajectory = run(
            &self.stepper,
            initial,
            self.config.max_iter,
            |before, report, after| {
                if report.k == 1 || report.k % every == 0 {
                    records.push(self.row(before, Some(report), &schedule));
                }
                probe.extend(probe_of(&after.x_curr));
            },
        )?;
        records.push(self.row(&trajectory.final_state, None, &schedule));
        let diverged_at = records
            .iter()
            .find(|r| r.status == Status::Diverged)
            .map(|r| r.k);
        Ok(SeedRun {
            seed,
            records,
            probe,
            diverged_at,
        })
    }

    /// Runs every configured seed (in parallel) and summarizes.
    pub fn run_all(&self, jobs: Option<usize>) -> Result<ExperimentOutput> {
        let seeds = self.config.seeds.clone();
        let work = || {
            seeds
                .par_iter()
                .map(|&s| self.run_seed(s))
                .collect::<Result<Vec<_>>>()
        };
        let runs = match jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("jobs: {e}")))?
                .install(work)?,
            None => work()?,
        };
        let summary = summarize(&self.config, &runs);
        Ok(ExperimentOutput { runs, summary })
    }
}

/// Rows and stiff-mode probe of one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<TrajectoryRecord>,
    /// `⟨x_k − x*, u_max⟩` at every iterate (quadratic objectives only).
    pub probe: Vec<f64>,
    /// First iterate index that is non-finite.
    pub diverged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_k: usize,
    pub initial_gap: Option<f64>,
    pub final_gap: Option<f64>,
    pub diverged_at: Option<usize>,
    pub fit: Option<RateFit>,
    pub zero_crossings: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds: usize,
    pub diverged: usize,
    pub final_gap_mean: Option<f64>,
    pub final_gap_median: Option<f64>,
    pub final_gap_q10: Option<f64>,
    pub final_gap_q90: Option<f64>,
    /// Fit of the cross-seed mean gap curve.
    pub mean_curve_fit: Option<RateFit>,
    pub zero_crossings_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub gradient: GradientKind,
    pub fit_range: (usize, usize),
    pub burn_in_fraction: f64,
    pub seeds: Vec<SeedSummary>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<SeedRun>,
    pub summary: Summary,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Summary of per-seed rows; `crossings` holds each seed's zero-crossing
/// count when a probe was recorded.
pub fn summarize_records(
    config: &ExperimentConfig,
    runs: &[(u64, &[TrajectoryRecord], Option<usize>)],
) -> Summary {
    let range = config.fit_range();
    let frac = config.fit.burn_in_fraction;
    let seeds: Vec<SeedSummary> = runs
        .iter()
        .map(|&(seed, records, crossings)| {
            let last = records.last();
            let diverged_at = records
                .iter()
                .find(|r| r.status == Status::Diverged)
                .map(|r| r.k);
            SeedSummary {
                seed,
                final_k: last.map_or(0, |r| r.k),
                initial_gap: records.first().and_then(|r| finite(r.objective_gap)),
                final_gap: if diverged_at.is_some() {
                    None
                } else {
                    last.and_then(|r| finite(r.objective_gap))
                },
                diverged_at,
                fit: if diverged_at.is_some() {
                    None
                } else {
                    fit_rate(records, Field::ObjectiveGap, range, frac).ok()
                },
                zero_crossings: crossings,
            }
        })
        .collect();
    let finals: Vec<f64> = seeds.iter().filter_map(|s| s.final_gap).collect();
    let curves: Vec<&[TrajectoryRecord]> = runs.iter().map(|r| r.1).collect();
    let mean = mean_curve(&curves, Field::ObjectiveGap);
    let (lo, hi) = (range.0 as f64, range.1 as f64);
    let mean_curve_fit = fit_power_law(
        mean.iter().map(|&(k, v)| (k as f64, v)),
        lo + frac.clamp(0.0, 1.0) * (hi - lo),
        hi,
    )
    .ok();
    let crossings: Vec<f64> = seeds
        .iter()
        .filter_map(|s| s.zero_crossings.map(|c| c as f64))
        .collect();
    let aggregate = Aggregate {
        seeds: seeds.len(),
        diverged: seeds.iter().filter(|s| s.diverged_at.is_some()).count(),
        final_gap_mean: (!finals.is_empty())
            .then(|| finals.iter().sum::<f64>() / finals.len() as f64),
        final_gap_median: median(&finals),
        final_gap_q10: quantile(&finals, 0.1),
        final_gap_q90: quantile(&finals, 0.9),
        mean_curve_fit,
        zero_crossings_median: median(&crossings),
    };
    Summary {
        algorithm: config.algorithm,
        gradient: config.gradient_kind(),
        fit_range: range,
        burn_in_fraction: frac,
        seeds,
        aggregate,
    }
}

pub fn summarize(config: &ExperimentConfig, runs: &[SeedRun]) -> Summary {
    let view: Vec<(u64, &[TrajectoryRecord], Option<usize>)> = runs
        .iter()
        .map(|r| {
            let crossings = (!r.probe.is_empty()).then(|| zero_crossings(&r.probe));
            (r.seed, r.records.as_slice(), crossings)
        })
        .collect();
    summarize_records(config, &view)
}

pub fn trajectory_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub const SUMMARY_FILE: &str = "summary.json";

/// Writes one CSV per seed and `summary.json` into `dir`.
pub fn write_output(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for run in &output.runs {
        save_trajectory(&trajectory_path(dir, run.seed), &run.records)?;
    }
    write_json(&dir.join(SUMMARY_FILE), &output.summary)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Builds, runs and (when `out` is given) persists an experiment.
pub fn run_experiment(
    config: &ExperimentConfig,
    out: Option<&Path>,
    jobs: Option<usize>,
) -> Result<ExperimentOutput> {
    let output = Experiment::new(config)?.run_all(jobs)?;
    if let Some(dir) = out {
        write_output(dir, &output)?;
    }
    Ok(output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareEntry {
    pub algorithm: Algorithm,
    pub final_gap_median: Option<f64>,
    pub mean_curve_slope: Option<f64>,
    pub zero_crossings_median: Option<f64>,
    pub diverged: usize,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub paired: bool,
    pub entries: Vec<CompareEntry>,
    /// Algorithms ordered by median final gap (diverged-everywhere last).
    pub ranking: Vec<Algorithm>,
}

/// Runs the configured algorithm and the two baselines (S-FISTA, heavy
/// ball) on one problem and seed set. With `paired`, every algorithm sees
/// the same sample stream per seed.
pub fn compare(
    config: &ExperimentConfig,
    out: Option<&Path>,
    jobs: Option<usize>,
    paired: bool,
) -> Result<(CompareReport, Vec<ExperimentOutput>)> {
    let built = Arc::new(build_problem(&config.problem)?);
    let kind = config.gradient_kind();
    let lead = match (config.algorithm, kind) {
        (Algorithm::Sfista | Algorithm::Shbf, GradientKind::Exact) | (Algorithm::Igahd, _) => {
            Algorithm::Igahd
        }
        _ => Algorithm::Sigahd,
    };
    let mut entries = Vec::new();
    let mut outputs = Vec::new();
    for (i, algorithm) in [lead, Algorithm::Sfista, Algorithm::Shbf]
        .into_iter()
        .enumerate()
    {
        let cfg = ExperimentConfig {
            algorithm,
            gradient: Some(kind),
            ..config.clone()
        };
        let mut exp = Experiment::with_problem(&cfg, built.clone())?;
        if !paired {
            exp = exp.unpaired(0xa160 + i as u64);
        }
        let output = exp.run_all(jobs)?;
        if let Some(dir) = out {
            write_output(&dir.join(algorithm.name()), &output)?;
        }
        let s = &output.summary;
        entries.push(CompareEntry {
            algorithm,
            final_gap_median: s.aggregate.final_gap_median,
            mean_curve_slope: s.aggregate.mean_curve_fit.map(|f| f.slope),
            zero_crossings_median: s.aggregate.zero_crossings_median,
            diverged: s.aggregate.diverged,
            summary: s.clone(),
        });
        outputs.push(output);
    }
    let mut ranking: Vec<(Algorithm, f64)> = entries
        .iter()
        .map(|e| (e.algorithm, e.final_gap_median.unwrap_or(f64::INFINITY)))
        .collect();
    ranking.sort_by(|a, b| a.1.total_cmp(&b.1));
    let report = CompareReport {
        paired,
        entries,
        ranking: ranking.into_iter().map(|r| r.0).collect(),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("compare.json"), &report)?;
    }
    Ok((report, outputs))
}
