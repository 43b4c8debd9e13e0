use serde::{Deserialize, Serialize};

use super::TrajectoryRecord;
use crate::{Error, Result};

/// Minimum number of points for a rate fit.
pub const MIN_FIT_POINTS: usize = 10;

/// Default share of `k_range` discarded before fitting.
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.1;

/// Scalar columns of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    ObjectiveGap,
    GradNormX,
    GradNormY,
    Velocity,
    StepSize,
    Lyapunov,
}

impl Field {
    pub fn get(self, r: &TrajectoryRecord) -> f64 {
        match self {
            Field::ObjectiveGap => r.objective_gap,
            Field::GradNormX => r.grad_norm_x,
            Field::GradNormY => r.grad_norm_y,
            Field::Velocity => r.velocity,
            Field::StepSize => r.step_size,
            Field::Lyapunov => r.lyapunov,
        }
    }
}

/// Least-squares line through `(log k, log value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
    /// Nonpositive or non-finite values skipped inside the range.
    pub excluded: usize,
}

/// Power-law fit of `(k, value)` pairs with `k` in `[lo, hi]`.
pub fn fit_power_law<I>(points: I, lo: f64, hi: f64) -> Result<RateFit>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0;
    for (k, v) in points {
        if k < lo || k > hi {
            continue;
        }
        if v > 0.0 && v.is_finite() {
            xs.push(k.ln());
            ys.push(v.ln());
        } else {
            excluded += 1;
        }
    }
    let n = xs.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            usable: n,
            required: MIN_FIT_POINTS,
        });
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData {
            usable: 1,
            required: MIN_FIT_POINTS,
        });
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r2,
        points: n,
        excluded,
    })
}

/// Fits `log field ~ log k` over `k_range`, after dropping the first
/// `burn_in_fraction` of the range.
pub fn fit_rate(
    records: &[TrajectoryRecord],
    field: Field,
    k_range: (usize, usize),
    burn_in_fraction: f64,
) -> Result<RateFit> {
    let (lo, hi) = (k_range.0 as f64, k_range.1 as f64);
    let start = lo + burn_in_fraction.clamp(0.0, 1.0) * (hi - lo);
    fit_power_law(
        records.iter().map(|r| (r.k as f64, field.get(r))),
        start,
        hi,
    )
}

/// Cross-seed mean of `field` at each `k` recorded by every run (runs that
/// diverged are skipped).
pub fn mean_curve(runs: &[&[TrajectoryRecord]], field: Field) -> Vec<(usize, f64)> {
    let kept: Vec<&[TrajectoryRecord]> = runs
        .iter()
        .copied()
        .filter(|r| r.iter().all(|x| x.status == super::Status::Ok))
        .collect();
    let Some(first) = kept.first() else {
        return Vec::new();
    };
    let len = kept.iter().map(|r| r.len()).min().unwrap_or(0);
    (0..len)
        .filter(|&i| kept.iter().all(|r| r[i].k == first[i].k))
        .map(|i| {
            let sum: f64 = kept.iter().map(|r| field.get(&r[i])).sum();
            (first[i].k, sum / kept.len() as f64)
        })
        .collect()
}

/// Cross-seed mean of `field` averaged over the last `tail_fraction` of each
/// run's rows.
pub fn plateau_level(
    runs: &[&[TrajectoryRecord]],
    field: Field,
    tail_fraction: f64,
) -> Result<f64> {
    const MIN_SEEDS: usize = 5;
    if runs.len() < MIN_SEEDS {
        return Err(Error::InsufficientData {
            usable: runs.len(),
            required: MIN_SEEDS,
        });
    }
    let frac = tail_fraction.clamp(f64::EPSILON, 1.0);
    let mut total = 0.0;
    for run in runs {
        if run.is_empty() {
            return Err(Error::InsufficientData {
                usable: 0,
                required: 1,
            });
        }
        let n = ((run.len() as f64 * frac).ceil() as usize).clamp(1, run.len());
        let tail = &run[run.len() - n..];
        total += tail.iter().map(|r| field.get(r)).sum::<f64>() / n as f64;
    }
    Ok(total / runs.len() as f64)
}

/// Number of sign changes, ignoring samples with `|v| < 1e−14`.
pub fn zero_crossings(series: &[f64]) -> usize {
    let mut last: Option<bool> = None;
    let mut count = 0;
    for &v in series {
        if v.is_nan() || v.abs() < 1e-14 {
            continue;
        }
        let positive = v > 0.0;
        if last.is_some_and(|p| p != positive) {
            count += 1;
        }
        last = Some(positive);
    }
    count
}

/// Median of the finite values, `None` if there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile of the finite values.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    Some(if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    })
}
