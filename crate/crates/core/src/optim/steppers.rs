use std::sync::Arc;

use super::{ErrorInjector, OptimizerState, ScheduleSet};
use crate::problems::{minibatch_gradient, Problem, StochasticOracle};
use crate::rng::Role;
use crate::{Error, Point, Result};

/// Where the gradients of a step come from.
#[derive(Clone)]
pub enum GradientSource {
    /// `∇f(·) + M_k(·)` with deterministic errors.
    Exact {
        problem: Arc<dyn Problem>,
        injector: Arc<dyn ErrorInjector>,
    },
    /// Minibatch averages of an unbiased oracle.
    Sampled(Arc<dyn StochasticOracle>),
}

/// Gradient errors of one step, `estimate − ∇f(point)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepErrors {
    /// `M^x_k`.
    pub x: Option<Point>,
    /// `M^x_{k−1}` (deterministic) or `M^{x⁻}_k` (stochastic).
    pub x_prev: Option<Point>,
    /// `M^y_k`.
    pub y: Option<Point>,
}

/// Everything computed during one iteration `k → k + 1`.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub k: usize,
    /// `s_k`.
    pub step: f64,
    /// `s_{k−1}`; equals `s_1` at `k = 1`.
    pub step_prev: f64,
    pub beta: f64,
    pub beta_prev: f64,
    pub x: Point,
    pub x_prev: Point,
    pub y: Point,
    /// Estimate at `x_k`; absent when the method does not use it.
    pub grad_x: Option<Point>,
    /// Lagged estimate at `x_{k−1}`; absent when its coefficient vanishes.
    pub grad_x_prev: Option<Point>,
    /// Estimate at `y_k` (at `x_k` for heavy ball).
    pub grad_y: Point,
    /// Known injected errors (exact sources only).
    pub injected: Option<StepErrors>,
    /// `(N^x_k, N^{x⁻}_k, N^y_k)`; zero for estimates not drawn.
    pub batch: (usize, usize, usize),
}

impl StepReport {
    /// Errors of the estimates used in this step. Injected errors are returned
    /// as is; sampled ones are measured against `problem`.
    pub fn errors_against(&self, problem: &dyn Problem) -> StepErrors {
        if let Some(e) = &self.injected {
            return e.clone();
        }
        StepErrors {
            x: self.grad_x.as_ref().map(|g| g - problem.gradient(&self.x)),
            x_prev: self
                .grad_x_prev
                .as_ref()
                .map(|g| g - problem.gradient(&self.x_prev)),
            y: Some(&self.grad_y - problem.gradient(&self.y)),
        }
    }

    /// Total number of sampled gradients in this step.
    pub fn oracle_calls(&self) -> usize {
        self.batch.0 + self.batch.1 + self.batch.2
    }
}

fn extrapolate(
    state: &OptimizerState,
    alpha_k: f64,
    c: f64,
    g: Option<&Point>,
    c_lag: f64,
    g_lag: Option<&Point>,
) -> Point {
    let mut y = &state.x_curr + (&state.x_curr - &state.x_prev) * alpha_k;
    if let Some(g) = g {
        if c != 0.0 {
            y.axpy(-c, g, 1.0);
        }
    }
    if let Some(g) = g_lag {
        if c_lag != 0.0 {
            y.axpy(c_lag, g, 1.0);
        }
    }
    y
}

fn lag_factor(k: usize) -> f64 {
    1.0 - 1.0 / k as f64
}

fn perturbed(problem: &dyn Problem, injector: &dyn ErrorInjector, p: &Point, e: &Point) -> Point {
    let g = problem.gradient(p);
    if injector.is_zero() {
        g
    } else {
        g + e
    }
}

/// One iteration of the inexact deterministic method.
pub fn igahd_step(
    state: &OptimizerState,
    problem: &dyn Problem,
    schedule: &ScheduleSet,
    injector: &dyn ErrorInjector,
) -> Result<(OptimizerState, StepReport)> {
    let k = state.k;
    let s = schedule.checked_step(k)?;
    let s_prev = if k > 1 { schedule.step(k - 1) } else { s };
    let beta = schedule.beta(k);
    let beta_prev = schedule.beta(k - 1);
    let c = beta * s.sqrt();
    let c_lag = if k > 1 {
        beta_prev * s_prev.sqrt() * lag_factor(k)
    } else {
        0.0
    };

    let (grad_x, err_x) = if beta != 0.0 {
        let m = injector.x_error(k, &state.x_curr);
        (
            Some(perturbed(problem, injector, &state.x_curr, &m)),
            Some(m),
        )
    } else {
        (None, None)
    };
    let (grad_x_prev, err_x_prev) = if c_lag != 0.0 {
        let m = injector.x_error(k - 1, &state.x_prev);
        let g = match &state.prev_perturbed_grad {
            Some(g) => g.clone(),
            None => perturbed(problem, injector, &state.x_prev, &m),
        };
        (Some(g), Some(m))
    } else {
        (None, None)
    };

    let y = extrapolate(
        state,
        schedule.alpha_k(k),
        c,
        grad_x.as_ref(),
        c_lag,
        grad_x_prev.as_ref(),
    );
    let err_y = injector.y_error(k, &y);
    let grad_y = perturbed(problem, injector, &y, &err_y);
    let x_next = &y - &grad_y * s;

    let next = OptimizerState {
        k: k + 1,
        x_curr: x_next,
        x_prev: state.x_curr.clone(),
        prev_perturbed_grad: grad_x.clone(),
        stream: state.stream,
    };
    let report = StepReport {
        k,
        step: s,
        step_prev: s_prev,
        beta,
        beta_prev,
        x: state.x_curr.clone(),
        x_prev: state.x_prev.clone(),
        y,
        grad_x,
        grad_x_prev,
        grad_y,
        injected: Some(StepErrors {
            x: err_x,
            x_prev: err_x_prev,
            y: Some(err_y),
        }),
        batch: (0, 0, 0),
    };
    Ok((next, report))
}

/// One iteration of the stochastic method. The three estimates use the
/// state's sample stream at roles `X`, `XPrev` and `Y` of iteration `k`.
pub fn sigahd_step(
    state: &OptimizerState,
    oracle: &dyn StochasticOracle,
    schedule: &ScheduleSet,
) -> Result<(OptimizerState, StepReport)> {
    let stream = state
        .stream
        .ok_or_else(|| Error::invalid("stream", "stochastic steps need a sample stream"))?;
    let k = state.k;
    let s = schedule.checked_step(k)?;
    let s_prev = if k > 1 { schedule.step(k - 1) } else { s };
    let beta = schedule.beta(k);
    let c = beta * s.sqrt();
    // s_0 is undefined, and (1 − 1/k) vanishes at k = 1 anyway.
    let c_lag = if k > 1 {
        beta * s_prev.sqrt() * lag_factor(k)
    } else {
        0.0
    };
    let (nx, nxm, ny) = schedule.batch_sizes(k);

    let grad_x = if c != 0.0 {
        Some(minibatch_gradient(
            oracle,
            &state.x_curr,
            nx,
            &mut stream.rng(k, Role::X),
        )?)
    } else {
        None
    };
    let grad_x_prev = if c_lag != 0.0 {
        Some(minibatch_gradient(
            oracle,
            &state.x_prev,
            nxm,
            &mut stream.rng(k, Role::XPrev),
        )?)
    } else {
        None
    };
    let y = extrapolate(
        state,
        schedule.alpha_k(k),
        c,
        grad_x.as_ref(),
        c_lag,
        grad_x_prev.as_ref(),
    );
    let grad_y = minibatch_gradient(oracle, &y, ny, &mut stream.rng(k, Role::Y))?;
    let x_next = &y - &grad_y * s;

    let next = OptimizerState {
        k: k + 1,
        x_curr: x_next,
        x_prev: state.x_curr.clone(),
        prev_perturbed_grad: None,
        stream: state.stream,
    };
    let report = StepReport {
        k,
        step: s,
        step_prev: s_prev,
        beta,
        beta_prev: schedule.beta(k - 1),
        x: state.x_curr.clone(),
        x_prev: state.x_prev.clone(),
        y,
        batch: (
            if grad_x.is_some() { nx } else { 0 },
            if grad_x_prev.is_some() { nxm } else { 0 },
            ny,
        ),
        grad_x,
        grad_x_prev,
        grad_y,
        injected: None,
    };
    Ok((next, report))
}

/// The same iteration with `β ≡ 0`: Nesterov acceleration with the `1 − α/k`
/// momentum. This is the only way to run with zero Hessian damping.
pub fn fista_step(
    state: &OptimizerState,
    source: &GradientSource,
    schedule: &ScheduleSet,
) -> Result<(OptimizerState, StepReport)> {
    let undamped = schedule.undamped();
    match source {
        GradientSource::Exact { problem, injector } => {
            igahd_step(state, problem.as_ref(), &undamped, injector.as_ref())
        }
        GradientSource::Sampled(oracle) => sigahd_step(state, oracle.as_ref(), &undamped),
    }
}

fn check_heavy_ball(damping: f64, s: f64) -> Result<f64> {
    let momentum = 1.0 - damping * s.sqrt();
    if !(damping > 0.0 && damping.is_finite()) || !(momentum > 0.0 && momentum < 1.0) {
        return Err(Error::invalid(
            "damping",
            format!("momentum 1 - damping*sqrt(s) = {momentum} must lie in (0, 1)"),
        ));
    }
    Ok(momentum)
}

/// Heavy ball with constant damping:
/// `x_{k+1} = x_k + (1 − damping·√s_k)(x_k − x_{k−1}) − s_k G_k`.
pub fn hbf_step(
    state: &OptimizerState,
    source: &GradientSource,
    schedule: &ScheduleSet,
    damping: f64,
) -> Result<(OptimizerState, StepReport)> {
    let k = state.k;
    let s = schedule.checked_step(k)?;
    let momentum = check_heavy_ball(damping, s)?;
    let x = &state.x_curr;
    let (grad, injected, batch) = match source {
        GradientSource::Exact { problem, injector } => {
            let m = injector.x_error(k, x);
            let g = perturbed(problem.as_ref(), injector.as_ref(), x, &m);
            let errors = StepErrors {
                x: None,
                x_prev: None,
                y: Some(m),
            };
            (g, Some(errors), (0, 0, 0))
        }
        GradientSource::Sampled(oracle) => {
            let stream = state
                .stream
                .ok_or_else(|| Error::invalid("stream", "stochastic steps need a sample stream"))?;
            let (n, _, _) = schedule.batch_sizes(k);
            let g = minibatch_gradient(oracle.as_ref(), x, n, &mut stream.rng(k, Role::X))?;
            (g, None, (0, 0, n))
        }
    };
    let x_next = x + (x - &state.x_prev) * momentum - &grad * s;
    let next = OptimizerState {
        k: k + 1,
        x_curr: x_next,
        x_prev: x.clone(),
        prev_perturbed_grad: None,
        stream: state.stream,
    };
    let report = StepReport {
        k,
        step: s,
        step_prev: if k > 1 { schedule.step(k - 1) } else { s },
        beta: 0.0,
        beta_prev: 0.0,
        x: x.clone(),
        x_prev: state.x_prev.clone(),
        y: x.clone(),
        grad_x: None,
        grad_x_prev: None,
        grad_y: grad,
        injected,
        batch,
    };
    Ok((next, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// I-IGAHD with an exact source, S-IGAHD with a sampled one.
    Igahd,
    Fista,
    HeavyBall {
        damping: f64,
    },
}

/// A method bound to its gradient source and schedule.
#[derive(Clone)]
pub struct Stepper {
    method: Method,
    source: GradientSource,
    schedule: ScheduleSet,
}

impl Stepper {
    pub fn new(method: Method, source: GradientSource, schedule: ScheduleSet) -> Result<Self> {
        if let Method::HeavyBall { damping } = method {
            check_heavy_ball(damping, schedule.step(1))?;
        }
        Ok(Self {
            method,
            source,
            schedule,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn source(&self) -> &GradientSource {
        &self.source
    }

    /// Schedule as configured (FISTA zeroes `β` internally).
    pub fn schedule(&self) -> &ScheduleSet {
        &self.schedule
    }

    /// Schedule whose `β_k` matches the iterates actually produced.
    pub fn effective_schedule(&self) -> ScheduleSet {
        match self.method {
            Method::Igahd => self.schedule.clone(),
            Method::Fista | Method::HeavyBall { .. } => self.schedule.undamped(),
        }
    }

    pub fn step(&self, state: &OptimizerState) -> Result<(OptimizerState, StepReport)> {
        match (self.method, &self.source) {
            (Method::Igahd, GradientSource::Exact { problem, injector }) => {
                igahd_step(state, problem.as_ref(), &self.schedule, injector.as_ref())
            }
            (Method::Igahd, GradientSource::Sampled(oracle)) => {
                sigahd_step(state, oracle.as_ref(), &self.schedule)
            }
            (Method::Fista, source) => fista_step(state, source, &self.schedule),
            (Method::HeavyBall { damping }, source) => {
                hbf_step(state, source, &self.schedule, damping)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{BatchRules, PowerLawErrors, StepRule, ZeroErrors};
    use crate::problems::{DeterministicOracle, Quadratic};
    use crate::rng::SampleStream;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn scalar() -> Arc<dyn Problem> {
        Arc::new(Quadratic::diagonal(&[1.0]).unwrap())
    }

    #[test]
    fn first_iteration_worked_example() {
        // f = x²/2, s = 1, α = 3, η = 0.8 so β_1√s_1 = 0.4.
        let sched = ScheduleSet::deterministic(3.0, 0.8, StepRule::Constant(1.0)).unwrap();
        let p = scalar();
        let state = OptimizerState::new(dvector![1.0]);
        let (next, report) = igahd_step(&state, p.as_ref(), &sched, &ZeroErrors).unwrap();
        assert_abs_diff_eq!(report.y[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(next.x_curr[0], 0.0, epsilon = 1e-15);
        assert_eq!(next.k, 2);
        assert_eq!(next.x_prev, dvector![1.0]);
    }

    #[test]
    fn second_iteration_by_hand() {
        let q: Arc<dyn Problem> = Arc::new(Quadratic::diagonal(&[1.0, 4.0]).unwrap());
        let sched = ScheduleSet::deterministic(3.5, 0.6, StepRule::Constant(0.2)).unwrap();
        let x0 = dvector![1.0, -1.0];
        let s1 = OptimizerState::new(x0.clone());
        let (s2, _) = igahd_step(&s1, q.as_ref(), &sched, &ZeroErrors).unwrap();
        let (_, r2) = igahd_step(&s2, q.as_ref(), &sched, &ZeroErrors).unwrap();
        let grad = |v: &Point| dvector![v[0], 4.0 * v[1]];
        let (s, beta) = (0.2f64, 0.3 * 0.2f64.sqrt());
        let y1 = &x0 - grad(&x0) * (beta * s.sqrt());
        let x2 = &y1 - grad(&y1) * s;
        let y2 = &x2 + (&x2 - &x0) * (1.0 - 3.5 / 2.0) - grad(&x2) * (beta * s.sqrt())
            + grad(&x0) * (beta * s.sqrt() * 0.5);
        assert!((r2.y - y2).amax() < 1e-15);
    }

    #[test]
    fn fista_matches_plain_nesterov() {
        let q: Arc<dyn Problem> = Arc::new(Quadratic::diagonal(&[0.5, 3.0, 10.0]).unwrap());
        let sched = ScheduleSet::deterministic(3.0, 1.0, StepRule::Constant(0.1)).unwrap();
        let source = GradientSource::Exact {
            problem: q.clone(),
            injector: Arc::new(ZeroErrors),
        };
        let mut state = OptimizerState::new(dvector![1.0, 1.0, 1.0]);
        let (mut x, mut xp) = (state.x_curr.clone(), state.x_curr.clone());
        for k in 1..=500 {
            let (next, _) = fista_step(&state, &source, &sched).unwrap();
            let y = &x + (&x - &xp) * (1.0 - 3.0 / k as f64);
            let xn = &y - q.gradient(&y) * 0.1;
            xp = std::mem::replace(&mut x, xn);
            assert!(
                (&next.x_curr - &x).amax() <= 1e-15 * (1.0 + x.amax()),
                "k={k}"
            );
            state = next;
        }
    }

    #[test]
    fn zero_variance_oracle_reproduces_deterministic_run() {
        let q: Arc<dyn Problem> = Arc::new(Quadratic::diagonal(&[0.3, 2.0, 7.0]).unwrap());
        let oracle = DeterministicOracle::new(q.clone());
        let s = StepRule::Constant(1.0 / 7.0);
        let det = ScheduleSet::deterministic(3.1, 0.9, s.clone()).unwrap();
        let sto =
            ScheduleSet::stochastic(3.1, 0.9, s, BatchRules::quadratic_growth(), false).unwrap();
        let mut a = OptimizerState::new(dvector![1.0, -2.0, 0.5]);
        let mut b = a.clone().with_stream(SampleStream::new(9));
        for _ in 0..1000 {
            a = igahd_step(&a, q.as_ref(), &det, &ZeroErrors).unwrap().0;
            b = sigahd_step(&b, &oracle, &sto).unwrap().0;
            assert_eq!(a.x_curr, b.x_curr);
        }
    }

    #[test]
    fn stochastic_lag_uses_current_beta() {
        let q: Arc<dyn Problem> = Arc::new(Quadratic::diagonal(&[1.0, 2.0]).unwrap());
        let oracle = DeterministicOracle::new(q.clone());
        let rule = StepRule::Power {
            s0: 0.4,
            exponent: 0.5,
        };
        let sto =
            ScheduleSet::stochastic(3.0, 0.5, rule, BatchRules::quadratic_growth(), false).unwrap();
        let state = OptimizerState {
            k: 4,
            x_curr: dvector![0.5, 0.25],
            x_prev: dvector![1.0, 1.0],
            prev_perturbed_grad: None,
            stream: Some(SampleStream::new(1)),
        };
        let (_, r) = sigahd_step(&state, &oracle, &sto).unwrap();
        let s4: f64 = 0.4 / 2.0;
        let s3 = 0.4 / 3f64.sqrt();
        let b4 = 0.25 * s4.sqrt();
        let expect = &state.x_curr + (&state.x_curr - &state.x_prev) * 0.25
            - q.gradient(&state.x_curr) * (b4 * s4.sqrt())
            + q.gradient(&state.x_prev) * (b4 * s3.sqrt() * 0.75);
        assert!((r.y - expect).amax() < 1e-15);
    }

    #[test]
    fn heavy_ball_boundaries() {
        let sched = ScheduleSet::deterministic(3.0, 0.5, StepRule::Constant(0.25)).unwrap();
        let source = GradientSource::Exact {
            problem: scalar(),
            injector: Arc::new(ZeroErrors),
        };
        assert!(Stepper::new(
            Method::HeavyBall { damping: 2.0 },
            source.clone(),
            sched.clone()
        )
        .is_err());
        assert!(Stepper::new(
            Method::HeavyBall { damping: 0.0 },
            source.clone(),
            sched.clone()
        )
        .is_err());
        let st = Stepper::new(Method::HeavyBall { damping: 0.1 }, source, sched).unwrap();
        let state = OptimizerState {
            k: 2,
            x_curr: dvector![1.0],
            x_prev: dvector![2.0],
            prev_perturbed_grad: None,
            stream: None,
        };
        let (next, _) = st.step(&state).unwrap();
        assert_abs_diff_eq!(next.x_curr[0], 1.0 - 0.95 - 0.25, epsilon = 1e-15);
    }

    #[test]
    fn injected_errors_are_reported() {
        let sched = ScheduleSet::deterministic(3.0, 0.5, StepRule::Constant(0.5)).unwrap();
        let inj = PowerLawErrors::new(0.1, 2.5);
        let p = scalar();
        let s1 = OptimizerState::new(dvector![1.0]);
        let (s2, _) = igahd_step(&s1, p.as_ref(), &sched, &inj).unwrap();
        let (_, r) = igahd_step(&s2, p.as_ref(), &sched, &inj).unwrap();
        let e = r.errors_against(p.as_ref());
        assert_abs_diff_eq!(e.x.unwrap()[0], 0.1 * 2f64.powf(-2.5), epsilon = 1e-16);
        assert_abs_diff_eq!(e.x_prev.unwrap()[0], 0.1, epsilon = 1e-16);
        assert_abs_diff_eq!(r.grad_x_prev.unwrap()[0], 1.1, epsilon = 1e-15);
    }

    #[test]
    fn sampled_step_needs_stream() {
        let oracle = DeterministicOracle::new(scalar());
        let sched = ScheduleSet::stochastic(
            3.0,
            0.5,
            StepRule::Constant(1.0),
            BatchRules::quadratic_growth(),
            false,
        )
        .unwrap();
        assert!(sigahd_step(&OptimizerState::new(dvector![1.0]), &oracle, &sched).is_err());
    }
}
