//! Discrete energies and the per-step descent inequality.
//!
//! With `t_k = (k − 1)/(α − 1)` and
//! `v_k = (x_{k−1} − x*) + t_k(x_k − x_{k−1} + β_{k−1}√s_{k−1}∇f(x_{k−1}))`,
//! the truncated energy is `Ê_k = s_k t_k²(f(x_k) − f*) + ½‖v_k‖²`. The full
//! energy of the analysis subtracts a forward sum `Σ_{κ≥k} ⟨v_{κ+1}, M_κ⟩`
//! that cannot be evaluated online, so [`check_lemma1`] verifies the
//! telescoped one-step form
//!
//! ```text
//! Ê_{k+1} − Ê_k + ⟨v_{k+1}, M_k⟩ ≤ s_k(t_{k+1}² − t_{k+1} − t_k²)(f(x_k) − f*)
//!     − (ε_k/4) s_k t_{k+1}² ‖∇f(y_k)‖² + (s_k²/2) t_{k+1}² ‖M^y_k‖²
//!     + β_k² s_k t_{k+1}² (2s_k/ε_k + 1) ‖M^x_k‖²
//!     + β_{k−1}² s_{k−1} t_k² (2s_k/ε_k + 1) ‖M^x_{k−1}‖²
//! ```
//!
//! with `ε_k = β_k(2√s_k − β_k)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::bench::TrajectoryRecord;
use crate::optim::{run, OptimizerState, ScheduleSet, StepReport, Stepper};
use crate::problems::Problem;
use crate::{Error, Point, Result};

/// Default burn-in before the descent inequality is required to hold.
pub const DEFAULT_BURN_IN: usize = 10;

/// Relative slack of the inequality check.
pub const LEMMA_TOLERANCE: f64 = 1e-9;

/// Minimum value, reference minimizer and (for singular quadratics) the
/// projector onto `ker(A)^⊥` used to measure the distance to the solution set.
#[derive(Debug, Clone)]
pub struct EnergyContext {
    f_star: f64,
    x_star: Point,
    range: Option<DMatrix<f64>>,
}

impl EnergyContext {
    /// Uses `x_star` when given, otherwise the problem's own minimizer.
    pub fn new(problem: &dyn Problem, x_star: Option<Point>) -> Result<Self> {
        let f_star = problem.min_value().ok_or(Error::MissingMinimum)?;
        let x_star = match x_star {
            Some(x) => x,
            None => problem.minimizer().cloned().ok_or(Error::MissingMinimum)?,
        };
        if x_star.len() != problem.dim() {
            return Err(Error::DimensionMismatch(format!(
                "x* has length {}, problem has dimension {}",
                x_star.len(),
                problem.dim()
            )));
        }
        let range = problem.quadratic_form().and_then(|(a, _)| {
            let eig = SymmetricEigen::new(a);
            let top = eig.eigenvalues.amax();
            let tol = 1e-12 * top.max(f64::MIN_POSITIVE);
            if eig.eigenvalues.iter().all(|&l| l > tol) {
                return None;
            }
            let n = eig.eigenvalues.len();
            let mut p = DMatrix::zeros(n, n);
            for (i, &l) in eig.eigenvalues.iter().enumerate() {
                if l > tol {
                    let u = eig.eigenvectors.column(i);
                    p += u * u.transpose();
                }
            }
            Some(p)
        });
        Ok(Self {
            f_star,
            x_star,
            range,
        })
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn x_star(&self) -> &Point {
        &self.x_star
    }

    /// `dist(z, S)`.
    pub fn distance(&self, z: &Point) -> f64 {
        let d = z - &self.x_star;
        match &self.range {
            Some(p) => (p * d).norm(),
            None => d.norm(),
        }
    }
}

/// Energy quantities at one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySnapshot {
    pub k: usize,
    /// `f(x_k) − f*`.
    pub gap: f64,
    /// `Ê_k`.
    pub e_hat: f64,
    pub v: Point,
    pub v_norm: f64,
    /// `V_k`, with `dist(z_k, S)` in place of `‖v_k‖`.
    pub v_stoch: f64,
}

/// Energy at `state` under `schedule` (use the stepper's effective schedule,
/// so that `β ≡ 0` for the undamped methods). True gradients are used.
pub fn energy_snapshot(
    state: &OptimizerState,
    schedule: &ScheduleSet,
    problem: &dyn Problem,
    ctx: &EnergyContext,
) -> EnergySnapshot {
    let k = state.k;
    let s = schedule.step(k);
    let t = schedule.t(k);
    let mut inner = &state.x_curr - &state.x_prev;
    if k > 1 {
        let c = schedule.beta(k - 1) * schedule.step(k - 1).sqrt();
        if c != 0.0 {
            inner.axpy(c, &problem.gradient(&state.x_prev), 1.0);
        }
    }
    let v = (&state.x_prev - &ctx.x_star) + inner * t;
    let gap = problem.value(&state.x_curr) - ctx.f_star;
    let scaled_gap = s * t * t * gap;
    let v_norm = v.norm();
    let dist = match &ctx.range {
        Some(_) => ctx.distance(&(&v + &ctx.x_star)),
        None => v_norm,
    };
    EnergySnapshot {
        k,
        gap,
        e_hat: scaled_gap + 0.5 * v_norm * v_norm,
        v,
        v_norm,
        v_stoch: scaled_gap + 0.5 * dist * dist,
    }
}

/// `M_k = β_k√s_k t_{k+1} M^x_k − β_{k−1}√s_{k−1} t_k M^x_{k−1} + s_k t_{k+1} M^y_k`
/// for the step in `report`.
pub fn error_term(report: &StepReport, schedule: &ScheduleSet, problem: &dyn Problem) -> Point {
    let k = report.k;
    let e = report.errors_against(problem);
    let (t, t1) = (schedule.t(k), schedule.t(k + 1));
    let mut m = Point::zeros(report.x.len());
    if let Some(mx) = &e.x {
        m.axpy(report.beta * report.step.sqrt() * t1, mx, 1.0);
    }
    if let Some(mxm) = &e.x_prev {
        m.axpy(-report.beta_prev * report.step_prev.sqrt() * t, mxm, 1.0);
    }
    if let Some(my) = &e.y {
        m.axpy(report.step * t1, my, 1.0);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckResult {
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// `ε_k = 0`: the inequality divides by `ε_k` and is not checked.
    pub skipped: bool,
}

/// One-step descent inequality between the snapshots at `k` and `k + 1`.
pub fn check_lemma1(
    prev: &EnergySnapshot,
    next: &EnergySnapshot,
    report: &StepReport,
    schedule: &ScheduleSet,
    problem: &dyn Problem,
) -> CheckResult {
    let k = report.k;
    let (s, s_prev) = (report.step, report.step_prev);
    let (beta, beta_prev) = (report.beta, report.beta_prev);
    let eps = beta * (2.0 * s.sqrt() - beta);
    if eps <= 0.0 {
        return CheckResult {
            k,
            lhs: f64::NAN,
            rhs: f64::NAN,
            satisfied: true,
            skipped: true,
        };
    }
    let (t, t1) = (schedule.t(k), schedule.t(k + 1));
    let m = error_term(report, schedule, problem);
    let lhs = next.e_hat - prev.e_hat + next.v.dot(&m);

    let e = report.errors_against(problem);
    let sq = |p: &Option<Point>| p.as_ref().map_or(0.0, |v| v.norm_squared());
    let grad_y = problem.gradient(&report.y).norm_squared();
    let amp = 2.0 * s / eps + 1.0;
    let rhs = s * (t1 * t1 - t1 - t * t) * prev.gap - 0.25 * eps * s * t1 * t1 * grad_y
        + 0.5 * s * s * t1 * t1 * sq(&e.y)
        + beta * beta * s * t1 * t1 * amp * sq(&e.x)
        + beta_prev * beta_prev * s_prev * t * t * amp * sq(&e.x_prev);
    CheckResult {
        k,
        lhs,
        rhs,
        satisfied: lhs <= rhs + LEMMA_TOLERANCE * (1.0 + rhs.abs()),
        skipped: false,
    }
}

/// Outcome of checking the inequality along a whole run.
#[derive(Debug, Clone)]
pub struct LemmaSummary {
    pub checks: Vec<CheckResult>,
    pub burn_in: usize,
    /// First `k` at which the inequality held.
    pub first_satisfied: Option<usize>,
    /// Smallest `k` from which it held at every later step.
    pub holds_from: Option<usize>,
    /// Violations at `k ≥ burn_in`.
    pub violations: Vec<usize>,
    pub skipped: bool,
}

/// Runs `stepper` from `x0` and checks the inequality at every step.
pub fn verify_lemma1(
    stepper: &Stepper,
    problem: &dyn Problem,
    ctx: &EnergyContext,
    x0: Point,
    max_iter: usize,
    burn_in: usize,
) -> Result<LemmaSummary> {
    let schedule = stepper.effective_schedule();
    let mut checks = Vec::with_capacity(max_iter);
    let initial = OptimizerState::new(x0);
    let mut prev = energy_snapshot(&initial, &schedule, problem, ctx);
    let trajectory = run(stepper, initial, max_iter, |_, report, after| {
        let next = energy_snapshot(after, &schedule, problem, ctx);
        checks.push(check_lemma1(&prev, &next, report, &schedule, problem));
        prev = next;
    })?;
    trajectory.into_result()?;
    let skipped = checks.iter().any(|c| c.skipped);
    let first_satisfied = checks
        .iter()
        .find(|c| c.satisfied && !c.skipped)
        .map(|c| c.k);
    let holds_from = match checks.iter().rposition(|c| !c.satisfied) {
        Some(i) => checks.get(i + 1).map(|c| c.k),
        None => checks.first().map(|c| c.k),
    };
    let violations = checks
        .iter()
        .filter(|c| c.k >= burn_in && !c.satisfied)
        .map(|c| c.k)
        .collect();
    Ok(LemmaSummary {
        checks,
        burn_in,
        first_satisfied,
        holds_from,
        violations,
        skipped,
    })
}

/// Series whose summability the convergence theory asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    /// `s_k k² ‖∇f(y_k)‖²`.
    GradYSq,
    /// `k² ‖∇f(x_k)‖²`.
    GradXSq,
    /// `s_k k (f(x_k) − f*)`.
    ValueGap,
    /// `k ‖x_k − x_{k−1}‖²`.
    VelocitySq,
}

impl Series {
    pub fn term(self, r: &TrajectoryRecord) -> f64 {
        let k = r.k as f64;
        match self {
            Series::GradYSq => r.step_size * k * k * r.grad_norm_y * r.grad_norm_y,
            Series::GradXSq => k * k * r.grad_norm_x * r.grad_norm_x,
            Series::ValueGap => r.step_size * k * r.objective_gap,
            Series::VelocitySq => r.velocity * r.velocity / k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums {
    pub ks: Vec<usize>,
    pub sums: Vec<f64>,
    /// Share of the total contributed by the last decade `k ∈ (K/10, K]`.
    pub tail_ratio: f64,
}

/// Running sums of `(k, term)` pairs; non-finite terms are skipped.
pub fn partial_sums<I: IntoIterator<Item = (usize, f64)>>(terms: I) -> PartialSums {
    let mut ks = Vec::new();
    let mut sums = Vec::new();
    let mut acc = 0.0;
    for (k, a) in terms {
        if !a.is_finite() {
            continue;
        }
        acc += a;
        ks.push(k);
        sums.push(acc);
    }
    let tail_ratio = match (ks.last(), sums.last()) {
        (Some(&kmax), Some(&total)) if total != 0.0 => {
            let cut = kmax / 10;
            let before = ks
                .iter()
                .zip(&sums)
                .take_while(|(&k, _)| k <= cut)
                .last()
                .map_or(0.0, |(_, &s)| s);
            (total - before) / total
        }
        _ => 0.0,
    };
    PartialSums {
        ks,
        sums,
        tail_ratio,
    }
}

/// Partial sums of `which` along recorded rows. Thinned records give sums
/// over the kept rows only.
pub fn summability_monitor(records: &[TrajectoryRecord], which: Series) -> PartialSums {
    partial_sums(records.iter().map(|r| (r.k, which.term(r))))
}

/// Squared single-draw noise norms of one step with their coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSample {
    pub k: usize,
    pub step: f64,
    pub step_prev: f64,
    pub beta: f64,
    pub beta_prev: f64,
    pub mx_sq: f64,
    pub mxm_sq: f64,
    pub my_sq: f64,
}

impl NoiseSample {
    /// Estimates that were not drawn count as noiseless.
    pub fn from_report(report: &StepReport, problem: &dyn Problem) -> Self {
        let e = report.errors_against(problem);
        let sq = |p: &Option<Point>| p.as_ref().map_or(0.0, |v| v.norm_squared());
        Self {
            k: report.k,
            step: report.step,
            step_prev: report.step_prev,
            beta: report.beta,
            beta_prev: report.beta_prev,
            mx_sq: sq(&e.x),
            mxm_sq: sq(&e.x_prev),
            my_sq: sq(&e.y),
        }
    }
}

/// Windowed variance proxies and the combined noise level `e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStats {
    pub k: Vec<usize>,
    pub sigma_x_sq: Vec<f64>,
    pub sigma_xm_sq: Vec<f64>,
    pub sigma_y_sq: Vec<f64>,
    /// `4β_k²s_kσ_x² + β_{k−1}²s_{k−1}σ_{x⁻}² + 4s_k²σ_y²`.
    pub e_k: Vec<f64>,
}

/// Trailing means over `window` samples (1 keeps raw single draws).
pub fn noise_stats(samples: &[NoiseSample], window: usize) -> NoiseStats {
    let w = window.max(1);
    let smooth = |f: &dyn Fn(&NoiseSample) -> f64| -> Vec<f64> {
        let raw: Vec<f64> = samples.iter().map(f).collect();
        let mut out = Vec::with_capacity(raw.len());
        let mut acc = 0.0;
        for i in 0..raw.len() {
            acc += raw[i];
            if i >= w {
                acc -= raw[i - w];
            }
            out.push(acc / (i + 1).min(w) as f64);
        }
        out
    };
    let sigma_x_sq = smooth(&|n| n.mx_sq);
    let sigma_xm_sq = smooth(&|n| n.mxm_sq);
    let sigma_y_sq = smooth(&|n| n.my_sq);
    let e_k = samples
        .iter()
        .enumerate()
        .map(|(i, n)| {
            4.0 * n.beta * n.beta * n.step * sigma_x_sq[i]
                + n.beta_prev * n.beta_prev * n.step_prev * sigma_xm_sq[i]
                + 4.0 * n.step * n.step * sigma_y_sq[i]
        })
        .collect();
    NoiseStats {
        k: samples.iter().map(|n| n.k).collect(),
        sigma_x_sq,
        sigma_xm_sq,
        sigma_y_sq,
        e_k,
    }
}
