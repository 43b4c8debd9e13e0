use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{sigmoid, softplus, GaussianDataset, Problem, Sampling, StochasticOracle};
use crate::rng::{Rng, Role, SampleStream};
use crate::{Error, Point, Result};

/// Gradient-norm target of the reference Newton solve.
pub const REFERENCE_GRAD_TOL: f64 = 1e-12;

#[derive(Debug)]
struct LabeledPool {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

/// Logistic cross-entropy risk of `h(A, x) = σ(A·x)` over a frozen
/// evaluation pool drawn from the data distribution.
///
/// Labels follow `Y ~ Bernoulli(σ(w*·X))`. The minimum is obtained once by a
/// Newton solve on the pool.
#[derive(Debug, Clone)]
pub struct LogisticRisk {
    pool: Arc<LabeledPool>,
    lipschitz: f64,
    minimizer: Point,
    min_value: f64,
}

impl LogisticRisk {
    pub fn pool_size(&self) -> usize {
        self.pool.x.nrows()
    }

    fn hessian(&self, w: &Point) -> DMatrix<f64> {
        let d = w.len();
        let n = self.pool_size();
        let mut h = DMatrix::zeros(d, d);
        for i in 0..n {
            let xi = self.pool.x.row(i);
            let p = sigmoid(xi.dot(&w.transpose()));
            let c = p * (1.0 - p);
            h.ger(c, &xi.transpose(), &xi.transpose(), 1.0);
        }
        h / n as f64
    }

    /// Damped Newton iterations down to `‖∇f‖ ≤ tol` (or stagnation).
    fn newton_solve(&self, tol: f64) -> Point {
        let d = self.pool.x.ncols();
        let mut w = DVector::zeros(d);
        let mut f = self.value(&w);
        for _ in 0..100 {
            let g = self.gradient(&w);
            if g.norm() <= tol {
                break;
            }
            let h = self.hessian(&w) + DMatrix::identity(d, d) * 1e-14;
            let Some(step) = h.cholesky().map(|c| c.solve(&g)) else {
                break;
            };
            let decrease = g.dot(&step);
            // Below this predicted decrease f no longer resolves progress.
            let unresolved = decrease <= 1e-12 * f.abs().max(1.0);
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-10 {
                let cand = &w - &step * t;
                let fc = self.value(&cand);
                let ok = if unresolved {
                    self.gradient(&cand).norm() < g.norm()
                } else {
                    fc <= f - 1e-4 * t * decrease
                };
                if ok {
                    w = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        w
    }
}

impl Problem for LogisticRisk {
    fn dim(&self) -> usize {
        self.pool.x.ncols()
    }

    fn value(&self, w: &Point) -> f64 {
        let z = &self.pool.x * w;
        let total: f64 = z
            .iter()
            .zip(self.pool.y.iter())
            .map(|(&zi, &yi)| softplus(zi) - yi * zi)
            .sum();
        total / self.pool_size() as f64
    }

    fn gradient(&self, w: &Point) -> Point {
        let z = &self.pool.x * w;
        let r = DVector::from_iterator(
            z.len(),
            z.iter()
                .zip(self.pool.y.iter())
                .map(|(&zi, &yi)| sigmoid(zi) - yi),
        );
        self.pool.x.tr_mul(&r) / self.pool_size() as f64
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn min_value(&self) -> Option<f64> {
        Some(self.min_value)
    }

    fn minimizer(&self) -> Option<&Point> {
        Some(&self.minimizer)
    }
}

/// Per-sample logistic gradients `(σ(A·x) − y)x`.
#[derive(Debug, Clone)]
pub struct LogisticOracle {
    dataset: Arc<GaussianDataset>,
    pool: Arc<LabeledPool>,
    sampling: Sampling,
}

impl LogisticOracle {
    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, f64) {
        match self.sampling {
            Sampling::Pool => {
                let i = rng.random_range(0..self.pool.x.nrows());
                (self.pool.x.row(i).transpose(), self.pool.y[i])
            }
            Sampling::Fresh => label(&self.dataset, rng),
        }
    }
}

fn label<R: rand::Rng + ?Sized>(ds: &GaussianDataset, rng: &mut R) -> (DVector<f64>, f64) {
    let x = ds.sample_features(rng);
    let p = sigmoid(ds.weights().row(0).dot(&x.transpose()));
    let y = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    (x, y)
}

impl StochasticOracle for LogisticOracle {
    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn sample_gradient(&self, w: &Point, rng: &mut Rng) -> Point {
        let (x, y) = self.draw(rng);
        let r = sigmoid(x.dot(w)) - y;
        x * r
    }

    /// Pool-average gradient; for fresh sampling this is the evaluation-pool
    /// approximation of `E_ζ[∇F(w, ζ)]`.
    fn full_gradient(&self, w: &Point) -> Option<Point> {
        let z = &self.pool.x * w;
        let r = DVector::from_iterator(
            z.len(),
            z.iter()
                .zip(self.pool.y.iter())
                .map(|(&zi, &yi)| sigmoid(zi) - yi),
        );
        Some(self.pool.x.tr_mul(&r) / self.pool.x.nrows() as f64)
    }
}

/// Pool risk (with reference minimum) and oracle for logistic
/// classification. The pool holds `dataset.n_samples()` labeled draws.
pub fn generate_classification(
    dataset: &GaussianDataset,
) -> Result<(LogisticRisk, LogisticOracle)> {
    if dataset.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    if dataset.outputs() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "classification needs a single weight row, got {}",
            dataset.outputs()
        )));
    }
    let n = dataset.n_samples();
    let d = dataset.dim();
    let mut rng = SampleStream::new(dataset.seed())
        .fork(0xc1a5)
        .rng(0, Role::Aux);
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let (xi, yi) = label(dataset, &mut rng);
        x.set_row(i, &xi.transpose());
        y[i] = yi;
    }
    let pool = Arc::new(LabeledPool { x, y });
    let lmax = SymmetricEigen::new(dataset.second_moment())
        .eigenvalues
        .max();
    let mut risk = LogisticRisk {
        pool: pool.clone(),
        lipschitz: 0.25 * lmax,
        minimizer: DVector::zeros(d),
        min_value: f64::NAN,
    };
    risk.minimizer = risk.newton_solve(REFERENCE_GRAD_TOL);
    risk.min_value = risk.value(&risk.minimizer);
    let oracle = LogisticOracle {
        dataset: Arc::new(dataset.clone()),
        pool,
        sampling: Sampling::Fresh,
    };
    Ok((risk, oracle))
}
