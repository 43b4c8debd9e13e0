use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    envelope, integrate_mode, max_stable_dt, mode_decompose, Envelope, ModeParams, Regime,
};
use crate::bench::zero_crossings;
use crate::optim::{igahd_step, OptimizerState, ScheduleSet, ZeroErrors};
use crate::problems::Problem;
use crate::{Error, Point, Result};

/// Share of the time window skipped before fitting a decay rate.
const FIT_SKIP: f64 = 0.1;
/// Samples below this fraction of the series maximum are treated as roundoff.
const FIT_FLOOR: f64 = 1e-13;

/// Discrete run and matched ODE along one non-zero eigen-direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub index: usize,
    pub lambda: f64,
    /// Envelope of the matched ODE.
    pub envelope: Envelope,
    pub discrete_crossings: usize,
    pub ode_crossings: usize,
    /// Fitted exponential rate in ODE time; `None` if too few usable points.
    pub discrete_rate: Option<f64>,
    pub ode_rate: Option<f64>,
    /// `⟨x_k − x*, u⟩` for `k = 1, 2, …`.
    pub discrete_series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub step: f64,
    pub alpha: f64,
    /// Discrete Hessian damping `β_1`.
    pub beta: f64,
    /// ODE damping, `β_1 + √s_1` unless set explicitly.
    pub ode_beta: f64,
    pub iterations: usize,
    pub modes: Vec<ModeComparison>,
}

/// One line of the mode-report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: usize,
    pub lambda: f64,
    pub regime: Regime,
    pub predicted_rate: f64,
    pub root_rate: f64,
    pub fitted_rate: f64,
    pub zero_crossings: usize,
    pub ode_fitted_rate: f64,
    pub ode_zero_crossings: usize,
}

impl ModeReport {
    pub fn rows(&self) -> Vec<ModeRow> {
        self.modes
            .iter()
            .map(|m| ModeRow {
                mode: m.index,
                lambda: m.lambda,
                regime: m.envelope.regime,
                predicted_rate: m.envelope.decay_rate,
                root_rate: m.envelope.root_rate,
                fitted_rate: m.discrete_rate.unwrap_or(f64::NAN),
                zero_crossings: m.discrete_crossings,
                ode_fitted_rate: m.ode_rate.unwrap_or(f64::NAN),
                ode_zero_crossings: m.ode_crossings,
            })
            .collect()
    }

    pub fn mode(&self, index: usize) -> Option<&ModeComparison> {
        self.modes.iter().find(|m| m.index == index)
    }

    /// The mode with the largest eigenvalue.
    pub fn stiffest(&self) -> Option<&ModeComparison> {
        self.modes.last()
    }
}

pub fn write_mode_csv<W: Write>(rows: &[ModeRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mode_csv<R: Read>(input: R) -> csv::Result<Vec<ModeRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

impl ModeReport {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_mode_csv(&self.rows(), std::io::BufWriter::new(file)).map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })
    }
}

/// Exponential rate of `|x(t)|·t^power` fitted through its local maxima
/// (all samples when the series does not oscillate).
fn fit_decay(t: &[f64], x: &[f64], power: f64) -> Option<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0 && peak.is_finite()) {
        return None;
    }
    let (t_first, t_last) = (*t.first()?, *t.last()?);
    let start = t_first + FIT_SKIP * (t_last - t_first);
    let usable = |i: usize| t[i] >= start && x[i].is_finite() && x[i].abs() > FIT_FLOOR * peak;
    let maxima: Vec<usize> = (1..x.len().saturating_sub(1))
        .filter(|&i| usable(i) && x[i].abs() >= x[i - 1].abs() && x[i].abs() > x[i + 1].abs())
        .collect();
    let picked: Vec<usize> = if maxima.len() >= 3 {
        maxima
    } else {
        (0..x.len()).filter(|&i| usable(i)).collect()
    };
    if picked.len() < 3 {
        return None;
    }
    let n = picked.len() as f64;
    let ys: Vec<f64> = picked
        .iter()
        .map(|&i| x[i].abs().ln() + power * t[i].ln())
        .collect();
    let mt = picked.iter().map(|&i| t[i]).sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (&i, y) in picked.iter().zip(&ys) {
        stt += (t[i] - mt) * (t[i] - mt);
        sty += (t[i] - mt) * (y - my);
    }
    (stt > 0.0).then(|| -sty / stt)
}

fn normalized_crossings(series: &[f64]) -> usize {
    let peak = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0 && peak.is_finite()) {
        return 0;
    }
    let scaled: Vec<f64> = series.iter().map(|v| v / peak).collect();
    zero_crossings(&scaled)
}

/// Runs the exact method on a quadratic, projects `x_k − x*` onto each
/// non-zero eigen-direction and compares with the matched mode ODE.
///
/// Time is identified as `t_k = k√s` with `s = s_1`; the ODE uses `b = 1`,
/// `γ = 0` and damping `β_1 + √s_1`, which includes the implicit Hessian
/// damping of evaluating the gradient at the extrapolated point.
pub fn discrete_vs_mode(
    problem: &dyn Problem,
    schedule: &ScheduleSet,
    x0: &Point,
    max_iter: usize,
) -> Result<ModeReport> {
    discrete_vs_mode_with(problem, schedule, x0, max_iter, None)
}

/// [`discrete_vs_mode`] with the ODE damping set explicitly.
pub fn discrete_vs_mode_with(
    problem: &dyn Problem,
    schedule: &ScheduleSet,
    x0: &Point,
    max_iter: usize,
    ode_beta: Option<f64>,
) -> Result<ModeReport> {
    let (a, _) = problem.quadratic_form().ok_or(Error::NotQuadratic)?;
    let x_star = problem.minimizer().ok_or(Error::MissingMinimum)?.clone();
    if x0.len() != problem.dim() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has {} entries, problem has dimension {}",
            x0.len(),
            problem.dim()
        )));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter", "must be positive"));
    }
    let modes: Vec<_> = mode_decompose(&a)?
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.zero)
        .collect();

    let mut iterates = vec![x0.clone()];
    let mut state = OptimizerState::new(x0.clone());
    for _ in 0..max_iter {
        let (next, _) = igahd_step(&state, problem, schedule, &ZeroErrors)?;
        if !next.is_finite() {
            break;
        }
        iterates.push(next.x_curr.clone());
        state = next;
    }

    let s = schedule.step(1);
    let root_s = s.sqrt();
    let beta = schedule.beta(1);
    let ode_beta = ode_beta.unwrap_or(beta + root_s);
    let times: Vec<f64> = (1..=iterates.len()).map(|k| k as f64 * root_s).collect();

    let mut out = Vec::with_capacity(modes.len());
    for (index, mode) in modes {
        let series: Vec<f64> = iterates
            .iter()
            .map(|x| (x - &x_star).dot(&mode.vector))
            .collect();
        let params =
            ModeParams::with_coefficients(mode.lambda, schedule.alpha(), ode_beta, 1.0, 0.0)?;
        let env = envelope(&params);
        let t_end = *times.last().expect("at least x_1");
        let limit = max_stable_dt(&params);
        let substeps = (root_s / limit).ceil().max(1.0);
        let ode = integrate_mode(&params, series[0], 0.0, root_s, t_end, root_s / substeps)?;
        out.push(ModeComparison {
            index,
            lambda: mode.lambda,
            envelope: env,
            discrete_crossings: normalized_crossings(&series),
            ode_crossings: normalized_crossings(&ode.x),
            discrete_rate: fit_decay(&times, &series, env.power),
            ode_rate: fit_decay(&ode.t, &ode.x, env.power),
            discrete_series: series,
        });
    }
    Ok(ModeReport {
        step: s,
        alpha: schedule.alpha(),
        beta,
        ode_beta,
        iterations: iterates.len() - 1,
        modes: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::StepRule;
    use crate::problems::Quadratic;
    use nalgebra::dvector;

    fn schedule(eta: f64, s: f64) -> ScheduleSet {
        ScheduleSet::deterministic(3.1, eta, StepRule::Constant(s)).unwrap()
    }

    #[test]
    fn needs_a_quadratic() {
        let q = Quadratic::diagonal(&[1.0, 2.0]).unwrap();
        assert!(discrete_vs_mode(&q, &schedule(0.5, 0.4), &dvector![1.0], 10).is_err());
        assert!(discrete_vs_mode(&q, &schedule(0.5, 0.4), &dvector![1.0, 1.0], 10).is_ok());
    }

    #[test]
    fn hessian_damping_reduces_stiff_crossings() {
        let q = Quadratic::diagonal(&[1.0, 1000.0]).unwrap();
        let s = 0.9 / 1000.0;
        let x0 = dvector![1.0, 1.0];
        // β = √s/4 ⇔ η = 1/2.
        let damped = discrete_vs_mode(&q, &schedule(0.5, s), &x0, 300).unwrap();
        let weak = discrete_vs_mode(&q, &schedule(0.5, s).undamped(), &x0, 300).unwrap();
        assert_eq!(weak.beta, 0.0);
        let (a, b) = (damped.stiffest().unwrap(), weak.stiffest().unwrap());
        assert_eq!(a.lambda, 1000.0);
        assert!(
            a.discrete_crossings < b.discrete_crossings,
            "{} vs {}",
            a.discrete_crossings,
            b.discrete_crossings
        );
    }

    #[test]
    fn isotropic_modes_share_a_regime() {
        let q = Quadratic::diagonal(&[3.0; 4]).unwrap();
        let r =
            discrete_vs_mode(&q, &schedule(0.5, 0.3), &dvector![1.0, -2.0, 0.5, 1.0], 50).unwrap();
        assert_eq!(r.modes.len(), 4);
        assert!(r.modes.iter().all(|m| m.envelope == r.modes[0].envelope));
    }

    #[test]
    fn one_dimensional_rate_within_factor_two() {
        let q = Quadratic::diagonal(&[1.0]).unwrap();
        let r = discrete_vs_mode(&q, &schedule(1.0, 0.01), &dvector![1.0], 3000).unwrap();
        let m = &r.modes[0];
        let fitted = m.discrete_rate.unwrap();
        let predicted = m.envelope.decay_rate;
        assert!(
            fitted / predicted > 0.5 && fitted / predicted < 2.0,
            "{fitted} vs {predicted}"
        );
        let ode = m.ode_rate.unwrap();
        assert!(
            ode / predicted > 0.5 && ode / predicted < 2.0,
            "{ode} vs {predicted}"
        );
    }

    #[test]
    fn explicit_ode_damping_can_overdamp() {
        let q = Quadratic::diagonal(&[1.0, 1000.0]).unwrap();
        let r = discrete_vs_mode_with(
            &q,
            &schedule(0.5, 1e-3),
            &dvector![1.0, 1.0],
            100,
            Some(0.1),
        )
        .unwrap();
        let stiff = r.stiffest().unwrap();
        assert_eq!(stiff.envelope.regime, Regime::Overdamped);
        assert_eq!(stiff.envelope.decay_rate, 2.0 / 0.1);
        let ode = stiff.ode_rate.unwrap();
        assert!((ode / stiff.envelope.root_rate - 1.0).abs() < 0.1, "{ode}");
        assert_eq!(r.modes[0].envelope.regime, Regime::Underdamped);
    }

    #[test]
    fn zero_modes_are_excluded() {
        let q = Quadratic::diagonal(&[0.0, 2.0]).unwrap();
        let r = discrete_vs_mode(&q, &schedule(0.5, 0.4), &dvector![1.0, 1.0], 20).unwrap();
        assert_eq!(r.modes.len(), 1);
        assert_eq!(r.modes[0].lambda, 2.0);
    }

    #[test]
    fn csv_round_trip() {
        let q = Quadratic::diagonal(&[1.0, 50.0]).unwrap();
        let r = discrete_vs_mode(&q, &schedule(0.5, 0.01), &dvector![1.0, 1.0], 200).unwrap();
        let mut buf = Vec::new();
        write_mode_csv(&r.rows(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .starts_with("mode,lambda,regime,predicted_rate,root_rate,fitted_rate,zero_crossings"));
        let back = read_mode_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].zero_crossings, r.rows()[1].zero_crossings);
        assert_eq!(back[1].regime, r.rows()[1].regime);
    }
}
