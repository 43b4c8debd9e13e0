use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use igahd::bench::{
    self, Experiment, ExperimentConfig, ExperimentOutput, GradientKind, ProblemConfig,
};
use igahd::lyapunov::{verify_lemma1, LemmaSummary};
use igahd::modes::discrete_vs_mode_with;
use igahd::{Error, Result};

use crate::Common;

pub const OK: i32 = 0;
pub const FAILURE: i32 = 1;
pub const CONFIG_ERROR: i32 = 2;
pub const ALL_DIVERGED: i32 = 3;
pub const VIOLATIONS: i32 = 4;

const DEFAULT_OUT: &str = "results";

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Schedule(_)
        | Error::InvalidParameter { .. }
        | Error::DimensionMismatch(_)
        | Error::NotQuadratic
        | Error::NotSymmetric { .. }
        | Error::NotPositiveSemidefinite { .. }
        | Error::NotPositiveDefinite
        | Error::EmptyBatch
        | Error::EmptyDataset => CONFIG_ERROR,
        _ => FAILURE,
    }
}

/// Config file with `--set` and `--seed` applied.
pub fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&c.config)?;
    for o in &c.overrides {
        config = config.with_override(o)?;
    }
    if let Some(seed) = c.seed {
        config.seeds = vec![seed];
    }
    Ok(config)
}

/// `--out` (or its environment variable), then the config, then `results`.
fn out_dir(c: &Common, config: &ExperimentConfig) -> PathBuf {
    c.out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn problem_name(p: &ProblemConfig) -> &'static str {
    match p {
        ProblemConfig::Quadratic(_) => "quadratic",
        ProblemConfig::Regression(_) => "regression",
        ProblemConfig::Classification(_) => "classification",
    }
}

fn all_diverged(outputs: &[&ExperimentOutput]) -> bool {
    outputs
        .iter()
        .all(|o| o.runs.iter().all(|r| r.diverged_at.is_some()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3e}"))
}

pub fn run(c: &Common) -> Result<i32> {
    let config = load(c)?;
    let out = out_dir(c, &config);
    eprintln!(
        "igahd: {} on {} ({} seed(s), {} iterations)",
        config.algorithm.name(),
        problem_name(&config.problem),
        config.seeds.len(),
        config.max_iter
    );
    let output = bench::run_experiment(&config, Some(&out), c.jobs)?;
    let agg = &output.summary.aggregate;
    eprintln!(
        "igahd: median final gap {}, slope {}, {} diverged; wrote {}",
        fmt_opt(agg.final_gap_median),
        fmt_opt(agg.mean_curve_fit.map(|f| f.slope)),
        agg.diverged,
        out.display()
    );
    Ok(if all_diverged(&[&output]) {
        ALL_DIVERGED
    } else {
        OK
    })
}

pub fn check_lemma(c: &Common) -> Result<i32> {
    let config = load(c)?;
    if config.gradient_kind() != GradientKind::Exact {
        return Err(Error::Config(
            "check-lemma needs exact gradients (gradient = \"exact\")".into(),
        ));
    }
    let exp = Experiment::new(&config)?;
    eprintln!(
        "igahd: checking the descent inequality over {} iterations",
        config.max_iter
    );
    let summary = verify_lemma1(
        exp.stepper(),
        exp.problem().as_ref(),
        exp.energy_context(),
        exp.x0().clone(),
        config.max_iter,
        config.burn_in,
    )?;
    let out = out_dir(c, &config);
    create_dir(&out)?;
    let mut csv = String::from("k,lhs,rhs,satisfied,skipped\n");
    for r in &summary.checks {
        csv.push_str(&format!(
            "{},{:.16e},{:.16e},{},{}\n",
            r.k, r.lhs, r.rhs, r.satisfied, r.skipped
        ));
    }
    write_text(&out.join("lemma.csv"), &csv)?;
    if summary.skipped {
        eprintln!("igahd: check skipped (β = 0)");
        return Ok(lemma_verdict(&summary));
    }
    let first = summary
        .first_satisfied
        .map_or("never".into(), |k| k.to_string());
    eprintln!(
        "igahd: first satisfied at k = {first}; violations after burn-in {}: {}",
        summary.burn_in,
        summary.violations.len()
    );
    if let Some(k) = summary.violations.first() {
        eprintln!("igahd: first violation at k = {k}");
    }
    Ok(lemma_verdict(&summary))
}

fn lemma_verdict(summary: &LemmaSummary) -> i32 {
    if summary.skipped || summary.violations.is_empty() {
        OK
    } else {
        VIOLATIONS
    }
}

pub fn modes(c: &Common, beta: Option<f64>) -> Result<i32> {
    let config = load(c)?;
    if !matches!(config.problem, ProblemConfig::Quadratic(_)) {
        return Err(Error::Config("modes needs a quadratic problem".into()));
    }
    let exp = Experiment::new(&config)?;
    let schedule = exp.stepper().effective_schedule();
    let report = discrete_vs_mode_with(
        exp.problem().as_ref(),
        &schedule,
        exp.x0(),
        config.max_iter,
        beta,
    )?;
    let out = out_dir(c, &config);
    create_dir(&out)?;
    let path = out.join("modes.csv");
    report.save_csv(&path)?;
    for m in &report.modes {
        eprintln!(
            "igahd: mode {} λ = {:.4e} {:?}, predicted rate {:.4e}, fitted {}, crossings {}",
            m.index,
            m.lambda,
            m.envelope.regime,
            m.envelope.decay_rate,
            fmt_opt(m.discrete_rate),
            m.discrete_crossings
        );
    }
    eprintln!("igahd: wrote {}", path.display());
    Ok(OK)
}

pub fn compare(c: &Common, paired: bool) -> Result<i32> {
    let config = load(c)?;
    let out = out_dir(c, &config);
    eprintln!(
        "igahd: comparing on {} ({} seed(s), {})",
        problem_name(&config.problem),
        config.seeds.len(),
        if paired { "paired" } else { "unpaired" }
    );
    let (report, outputs) = bench::compare(&config, Some(&out), c.jobs, paired)?;
    let mut err = std::io::stderr().lock();
    for e in &report.entries {
        let _ = writeln!(
            err,
            "igahd: {:>7}  median final gap {}  slope {}  crossings {}  diverged {}",
            e.algorithm.name(),
            fmt_opt(e.final_gap_median),
            fmt_opt(e.mean_curve_slope),
            e.zero_crossings_median
                .map_or("n/a".into(), |v| v.to_string()),
            e.diverged
        );
    }
    let ranking: Vec<&str> = report.ranking.iter().map(|a| a.name()).collect();
    let _ = writeln!(
        err,
        "igahd: ranking {}; wrote {}",
        ranking.join(" < "),
        out.display()
    );
    let refs: Vec<&ExperimentOutput> = outputs.iter().collect();
    Ok(if all_diverged(&refs) {
        ALL_DIVERGED
    } else {
        OK
    })
}

pub fn validate(c: &Common) -> Result<i32> {
    let config = load(c)?;
    Experiment::new(&config)?;
    eprintln!("igahd: {} is valid", c.config.display());
    Ok(OK)
}
