use super::ModeParams;
use crate::{Error, Result};

/// Samples of a scalar mode at `t0, t0 + dt, …` (the last step is shortened
/// to land on `t_end`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// Largest admissible time step, `min(0.01, 0.1/√(λb))`.
pub fn max_stable_dt(p: &ModeParams) -> f64 {
    0.01f64.min(0.1 / (p.lambda * p.b).sqrt())
}

fn rhs(p: &ModeParams, t: f64, x: f64, v: f64) -> (f64, f64) {
    let damping = p.alpha / t + p.beta * p.lambda;
    let stiffness = p.lambda * (p.b + p.gamma / t);
    (v, -damping * v - stiffness * x)
}

/// Classical fourth-order Runge–Kutta for
/// `ẍ + (α/t + βλ)ẋ + λ(b + γ/t)x = 0` from `(x0, v0)` at `t0 > 0`.
pub fn integrate_mode(
    p: &ModeParams,
    x0: f64,
    v0: f64,
    t0: f64,
    t_end: f64,
    dt: f64,
) -> Result<ModeTrajectory> {
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::invalid(
            "t0",
            "must be positive (the α/t coefficient is singular at 0)",
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let bound = max_stable_dt(p);
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "dt",
            format!("{dt} exceeds min(0.01, 0.1/sqrt(lambda*b)) = {bound}"),
        ));
    }
    if t_end.is_nan() || t_end < t0 {
        return Err(Error::invalid("t_end", "must not precede t0"));
    }
    let steps = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut out = ModeTrajectory {
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
    };
    let (mut t, mut x, mut v) = (t0, x0, v0);
    out.t.push(t);
    out.x.push(x);
    out.v.push(v);
    for i in 1..=steps {
        let next = if i == steps {
            t_end
        } else {
            t0 + i as f64 * dt
        };
        let h = next - t;
        let (k1x, k1v) = rhs(p, t, x, v);
        let (k2x, k2v) = rhs(p, t + 0.5 * h, x + 0.5 * h * k1x, v + 0.5 * h * k1v);
        let (k3x, k3v) = rhs(p, t + 0.5 * h, x + 0.5 * h * k2x, v + 0.5 * h * k2v);
        let (k4x, k4v) = rhs(p, next, x + h * k3x, v + h * k3v);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        t = next;
        out.t.push(t);
        out.x.push(x);
        out.v.push(v);
    }
    Ok(out)
}
