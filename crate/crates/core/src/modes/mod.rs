//! Eigen-mode analysis of quadratic objectives.
//!
//! On `f(x) = ½⟨Ax, x⟩` the inertial dynamic with Hessian-driven damping
//! decouples along the eigenvectors of `A` into scalar equations
//!
//! ```text
//! ẍ + (α/t + βλ)ẋ + λ(b + γ/t)x = 0,
//! ```
//!
//! whose regime is fixed by the sign of `ξ² = β²λ² − 4bλ`. This module
//! classifies modes, gives their asymptotic envelopes, integrates them
//! numerically and compares them with discrete runs.

mod compare;
mod ode;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::problems::symmetry_defect;
use crate::{Error, Point, Result};

pub use compare::{
    discrete_vs_mode, discrete_vs_mode_with, read_mode_csv, write_mode_csv, ModeComparison,
    ModeReport, ModeRow,
};
pub use ode::{integrate_mode, max_stable_dt, ModeTrajectory};

/// Relative tolerance for the critical regime.
pub const CRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Underdamped,
    Critical,
    Overdamped,
}

/// Coefficients of one scalar mode equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParams {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub gamma: f64,
}

impl ModeParams {
    /// Mode with the default `b = 1`, `γ = 0`.
    pub fn new(lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::with_coefficients(lambda, alpha, beta, 1.0, 0.0)
    }

    pub fn with_coefficients(
        lambda: f64,
        alpha: f64,
        beta: f64,
        b: f64,
        gamma: f64,
    ) -> Result<Self> {
        let check = |name, v: f64, ok: bool| {
            if v.is_finite() && ok {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("got {v}")))
            }
        };
        check("lambda", lambda, lambda > 0.0)?;
        check("alpha", alpha, alpha >= 0.0)?;
        check("beta", beta, beta >= 0.0)?;
        check("b", b, b > 0.0)?;
        check("gamma", gamma, gamma >= 0.0)?;
        Ok(Self {
            lambda,
            alpha,
            beta,
            b,
            gamma,
        })
    }

    /// `ξ² = β²λ² − 4bλ`.
    pub fn xi_sq(&self) -> f64 {
        let bl = self.beta * self.lambda;
        bl * bl - 4.0 * self.b * self.lambda
    }

    pub fn regime(&self) -> Regime {
        let bl = self.beta * self.lambda;
        let scale = (bl * bl).max(4.0 * self.b * self.lambda);
        let xi_sq = self.xi_sq();
        if xi_sq.abs() <= CRITICAL_TOL * scale {
            Regime::Critical
        } else if xi_sq > 0.0 {
            Regime::Overdamped
        } else {
            Regime::Underdamped
        }
    }

    /// `κ = λ(γ − αβ/2)/ξ`, overdamped modes only.
    pub fn kappa(&self) -> Option<f64> {
        (self.regime() == Regime::Overdamped).then(|| {
            self.lambda * (self.gamma - 0.5 * self.alpha * self.beta) / self.xi_sq().sqrt()
        })
    }

    /// `ζ = 2√(λ(γ − αβ/2))` in the critical regime; `None` when the radicand
    /// is negative or the mode is not critical.
    pub fn zeta(&self) -> Option<f64> {
        let r = self.lambda * (self.gamma - 0.5 * self.alpha * self.beta);
        (self.regime() == Regime::Critical && r >= 0.0).then(|| 2.0 * r.sqrt())
    }
}

/// Asymptotic envelope `|x(t)| ≲ C t^{−power} e^{−decay_rate·t}`.
///
/// `decay_rate` is the nominal rate (`2b/β` for overdamped modes);
/// `root_rate` is the slowest root of the limiting constant-coefficient
/// equation, `(βλ − ξ)/2`, which lies in `[b/β, 2b/β)` when overdamped and
/// equals `decay_rate` otherwise.
///
/// A critical mode with `γ < αβ/2` has imaginary `ζ`; its Bessel factor is
/// then of modified type and grows like `e^{|ζ|√t}`. That growth is kept in
/// `bessel_growth`. [`Envelope::at`] uses `root_rate` and `bessel_growth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub regime: Regime,
    pub decay_rate: f64,
    pub root_rate: f64,
    pub power: f64,
    /// `|ζ|` when `ζ` is imaginary, zero otherwise.
    pub bessel_growth: f64,
}

impl Envelope {
    pub fn at(&self, t: f64) -> f64 {
        t.powf(-self.power) * (self.bessel_growth * t.sqrt() - self.root_rate * t).exp()
    }

    /// Critical mode with imaginary `ζ`.
    pub fn imaginary_zeta(&self) -> bool {
        self.bessel_growth > 0.0
    }
}

pub fn envelope(p: &ModeParams) -> Envelope {
    let regime = p.regime();
    let (decay_rate, power) = match regime {
        Regime::Underdamped => (0.5 * p.beta * p.lambda, 0.5 * p.alpha),
        Regime::Overdamped => {
            let kappa = p.kappa().unwrap_or(0.0);
            (2.0 * p.b / p.beta, 0.5 * p.alpha - kappa.abs())
        }
        Regime::Critical => (0.5 * p.beta * p.lambda, (2.0 * p.alpha - 1.0) / 4.0),
    };
    let radicand = p.lambda * (p.gamma - 0.5 * p.alpha * p.beta);
    let bessel_growth = if regime == Regime::Critical && radicand < 0.0 {
        2.0 * (-radicand).sqrt()
    } else {
        0.0
    };
    let root_rate = match regime {
        Regime::Overdamped => 0.5 * (p.beta * p.lambda - p.xi_sq().sqrt()),
        _ => decay_rate,
    };
    Envelope {
        regime,
        decay_rate,
        root_rate,
        power,
        bessel_growth,
    }
}

/// One eigenpair of a quadratic form.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub lambda: f64,
    pub vector: Point,
    /// `|λ| ≤ 1e−12·λmax`: lies in `ker(A)` and is left out of the analysis.
    pub zero: bool,
}

/// Full eigensystem of a symmetric PSD matrix, eigenvalues ascending.
pub fn mode_decompose(a: &DMatrix<f64>) -> Result<Vec<Mode>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let asymmetry = symmetry_defect(a);
    if asymmetry > 1e-10 * (1.0 + a.amax()) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = SymmetricEigen::new((a + a.transpose()) * 0.5);
    let lmax = eig.eigenvalues.amax();
    let mut modes: Vec<Mode> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| Mode {
            lambda: l,
            vector: eig.eigenvectors.column(i).into_owned(),
            zero: l.abs() <= 1e-12 * lmax,
        })
        .collect();
    modes.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
    Ok(modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn undamped_mode_is_underdamped() {
        let p = ModeParams::new(4.0, 3.0, 0.0).unwrap();
        assert_eq!(p.xi_sq(), -16.0);
        let e = envelope(&p);
        assert_eq!(e.regime, Regime::Underdamped);
        assert_eq!((e.decay_rate, e.power), (0.0, 1.5));
    }

    #[test]
    fn overdamped_example() {
        let p = ModeParams::with_coefficients(1.0, 3.0, 2.0, 0.5, 0.0).unwrap();
        assert_eq!(p.xi_sq(), 2.0);
        let e = envelope(&p);
        assert_eq!(e.regime, Regime::Overdamped);
        assert_eq!(e.decay_rate, 0.5);
        assert_relative_eq!(e.root_rate, (2.0 - 2f64.sqrt()) / 2.0);
        assert!(e.root_rate >= 0.5 / 2.0 && e.root_rate < e.decay_rate);
        let kappa = (0.0 - 3.0) / 2f64.sqrt();
        assert_relative_eq!(e.power, 1.5 - kappa.abs(), max_relative = 1e-15);
    }

    #[test]
    fn critical_example() {
        let p = ModeParams::new(4.0, 3.0, 1.0).unwrap();
        assert_eq!(p.xi_sq(), 0.0);
        let e = envelope(&p);
        assert_eq!(e.regime, Regime::Critical);
        assert_eq!((e.decay_rate, e.power), (2.0, 1.25));
        // γ = 0 < αβ/2: ζ = 2√(−6)i.
        assert!(e.imaginary_zeta());
        assert_relative_eq!(e.bessel_growth, 2.0 * 6f64.sqrt());
        let q = ModeParams::with_coefficients(4.0, 3.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(q.zeta(), Some(2.0 * 2f64.sqrt()));
    }

    #[test]
    fn invalid_params() {
        assert!(ModeParams::new(0.0, 3.0, 1.0).is_err());
        assert!(ModeParams::new(1.0, 3.0, -1.0).is_err());
        assert!(ModeParams::with_coefficients(1.0, 3.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn decompose_diagonal_and_identity() {
        let m = mode_decompose(&DMatrix::from_diagonal(&nalgebra::dvector![1000.0, 1.0])).unwrap();
        assert_eq!(m[0].lambda, 1.0);
        assert_eq!(m[1].lambda, 1000.0);
        assert_relative_eq!(m[0].vector[1].abs(), 1.0);
        assert!(mode_decompose(&DMatrix::identity(4, 4))
            .unwrap()
            .iter()
            .all(|m| m.lambda == 1.0));
        let z = mode_decompose(&DMatrix::from_diagonal(&nalgebra::dvector![0.0, 2.0])).unwrap();
        assert!(z[0].zero && !z[1].zero);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            mode_decompose(&asym),
            Err(Error::NotSymmetric { .. })
        ));
    }

    proptest! {
        #[test]
        fn reconstruction(entries in prop::collection::vec(-1.0f64..1.0, 36)) {
            let g = DMatrix::from_row_slice(6, 6, &entries);
            let a = &g * g.transpose();
            let modes = mode_decompose(&a).unwrap();
            let mut r = DMatrix::zeros(6, 6);
            for m in &modes {
                r += &m.vector * m.vector.transpose() * m.lambda;
            }
            prop_assert!((r - &a).norm() <= 1e-10 * a.norm().max(1e-300));
            prop_assert!(modes.windows(2).all(|w| w[0].lambda <= w[1].lambda));
        }

        #[test]
        fn regime_is_scale_consistent(lambda in 0.01f64..100.0, beta in 0.0f64..5.0, b in 0.01f64..5.0, c in 0.1f64..10.0) {
            let p = ModeParams::with_coefficients(lambda, 3.0, beta, b, 0.0).unwrap();
            let q = ModeParams::with_coefficients(lambda, 3.0, c * beta, c * c * b, 0.0).unwrap();
            prop_assert_eq!(p.regime(), q.regime());
        }
    }
}
