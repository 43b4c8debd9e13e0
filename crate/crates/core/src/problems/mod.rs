//! Smooth convex objectives and the stochastic gradient oracles that sample
//! them.

mod classification;
mod dataset;
mod oracle;
mod quadratic;
mod regression;

pub use classification::{generate_classification, LogisticOracle, LogisticRisk};
pub use dataset::{DatasetSpec, GaussianDataset};
pub use oracle::{minibatch_gradient, DeterministicOracle, Sampling, StochasticOracle};
pub use quadratic::{make_quadratic, Quadratic};
pub use regression::{generate_regression, RegressionOracle, RegressionRisk};

use nalgebra::{DMatrix, DVector};

use crate::Point;

/// A proper convex differentiable function with L-Lipschitz gradient.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &Point) -> f64;

    fn gradient(&self, x: &Point) -> Point;

    /// A Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;

    /// `min f`, when known.
    fn min_value(&self) -> Option<f64>;

    /// The minimizer, when it is unique (or a reference solution is stored).
    fn minimizer(&self) -> Option<&Point>;

    /// `(H, b)` such that `f(x) = ½⟨Hx, x⟩ − ⟨b, x⟩ + const`, for quadratic
    /// objectives.
    fn quadratic_form(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        None
    }

    /// `f(x) − min f`; `None` when the minimum is unknown.
    fn gap(&self, x: &Point) -> Option<f64> {
        self.min_value().map(|m| self.value(x) - m)
    }
}

pub(crate) fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
