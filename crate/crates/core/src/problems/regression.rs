use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{GaussianDataset, Problem, Sampling, StochasticOracle};
use crate::rng::{Rng, Role, SampleStream};
use crate::{Error, Point, Result};

/// Batches at least this large (and larger than the feature dimension) are
/// drawn through their sufficient statistics instead of sample by sample.
pub const SUFFICIENT_STATISTIC_MIN_BATCH: usize = 64;

/// Population squared-error risk `R(A) = E‖AX − Y‖²` with `Y = MX + ε`.
///
/// In closed form `R(A) = tr((A − M)C(A − M)ᵀ) + qτ²` with `C = Σ + mmᵀ`,
/// so `A = M` is the minimizer and `L = 2λmax(C)`. The parameter `A` is
/// flattened row-major.
#[derive(Debug, Clone)]
pub struct RegressionRisk {
    weights: DMatrix<f64>,
    second_moment: DMatrix<f64>,
    noise_var: f64,
    lipschitz: f64,
    minimizer: Point,
}

impl RegressionRisk {
    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn features(&self) -> usize {
        self.weights.ncols()
    }

    /// Condition number of the risk Hessian (that of `Σ + mmᵀ`).
    pub fn condition_number(&self) -> f64 {
        let ev = SymmetricEigen::new(self.second_moment.clone()).eigenvalues;
        ev.max() / ev.min()
    }

    fn unflatten(&self, x: &Point) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.outputs(), self.features(), x.as_slice())
    }

    fn flatten(m: &DMatrix<f64>) -> Point {
        DVector::from_iterator(m.len(), m.transpose().iter().copied())
    }
}

impl Problem for RegressionRisk {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, x: &Point) -> f64 {
        let delta = self.unflatten(x) - &self.weights;
        (&delta * &self.second_moment).component_mul(&delta).sum()
            + self.outputs() as f64 * self.noise_var
    }

    fn gradient(&self, x: &Point) -> Point {
        let delta = self.unflatten(x) - &self.weights;
        Self::flatten(&(delta * &self.second_moment * 2.0))
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn min_value(&self) -> Option<f64> {
        Some(self.outputs() as f64 * self.noise_var)
    }

    fn minimizer(&self) -> Option<&Point> {
        Some(&self.minimizer)
    }

    fn quadratic_form(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let (q, d) = (self.outputs(), self.features());
        let mut h = DMatrix::zeros(q * d, q * d);
        for r in 0..q {
            h.view_mut((r * d, r * d), (d, d))
                .copy_from(&(&self.second_moment * 2.0));
        }
        let b = Self::flatten(&(&self.weights * &self.second_moment * 2.0));
        Some((h, b))
    }
}

/// Fixed sample pool shared by oracles in [`Sampling::Pool`] mode.
#[derive(Debug)]
struct Pool {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

/// Per-sample gradients `2(Ax − y)xᵀ` of the squared error.
#[derive(Debug, Clone)]
pub struct RegressionOracle {
    dataset: Arc<GaussianDataset>,
    sampling: Sampling,
    pool: Option<Arc<Pool>>,
}

impl RegressionOracle {
    pub fn sampling(&self) -> Sampling {
        self.sampling
    }

    /// Switches to drawing from the fixed `n_samples` pool.
    pub fn with_sampling(mut self, sampling: Sampling) -> Result<Self> {
        if sampling == Sampling::Pool && self.pool.is_none() {
            let n = self.dataset.n_samples();
            if n == 0 {
                return Err(Error::EmptyDataset);
            }
            let mut rng = SampleStream::new(self.dataset.seed())
                .fork(0x9001)
                .rng(0, Role::Aux);
            let x = self.dataset.sample_matrix(n, &mut rng);
            let mut y = &x * self.dataset.weights().transpose();
            let tau = self.dataset.noise_std();
            if tau > 0.0 {
                y.iter_mut().for_each(|v| {
                    *v += {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        tau * z
                    }
                });
            }
            self.pool = Some(Arc::new(Pool { x, y }));
        }
        self.sampling = sampling;
        Ok(self)
    }

    fn q(&self) -> usize {
        self.dataset.outputs()
    }

    fn d(&self) -> usize {
        self.dataset.dim()
    }

    fn residual_gradient(&self, a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> Point {
        let r = (a * x - y) * 2.0;
        RegressionRisk::flatten(&(r * x.transpose()))
    }

    /// Exact draw of `(1/n) Σ ∇F(A, ζᵢ)` via the sufficient statistics
    /// `Σ xᵢxᵢᵀ` (noncentral Wishart, Bartlett construction) and `Σ εᵢxᵢᵀ`.
    fn sufficient_statistic_gradient(&self, a: &DMatrix<f64>, n: usize, rng: &mut Rng) -> Point {
        let d = self.d();
        let nf = n as f64;
        let l = self.dataset.cholesky_factor();
        let m = self.dataset.mean();

        let g = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let zsum = g * nf.sqrt();
        let mut bart = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            let dof = (n - 1 - i) as f64;
            let chi: f64 = ChiSquared::new(dof).expect("positive dof").sample(rng);
            bart[(i, i)] = chi.sqrt();
            for j in 0..i {
                bart[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let zz = &bart * bart.transpose() + &zsum * zsum.transpose() / nf;
        let lz = l * &zsum;
        let sxx = m * m.transpose() * nf
            + &lz * m.transpose()
            + m * lz.transpose()
            + l * zz * l.transpose();

        let mut grad = (a - self.dataset.weights()) * &sxx * (2.0 / nf);
        let tau = self.dataset.noise_std();
        if tau > 0.0 {
            // Rows of Σ εᵢxᵢᵀ are N(0, τ² Σ xᵢxᵢᵀ) given the features.
            let sym = (&sxx + sxx.transpose()) * 0.5;
            let chol = sym
                .cholesky()
                .expect("sample second moment is positive definite for n > d")
                .l();
            for r in 0..self.q() {
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
                let e = &chol * z * tau;
                let mut row = grad.row_mut(r);
                row -= e.transpose() * (2.0 / nf);
            }
        }
        RegressionRisk::flatten(&grad)
    }
}

impl StochasticOracle for RegressionOracle {
    fn dim(&self) -> usize {
        self.q() * self.d()
    }

    fn sample_gradient(&self, x: &Point, rng: &mut Rng) -> Point {
        let a = DMatrix::from_row_slice(self.q(), self.d(), x.as_slice());
        match (&self.sampling, &self.pool) {
            (Sampling::Pool, Some(pool)) => {
                let i = rng.random_range(0..pool.x.nrows());
                let xi = pool.x.row(i).transpose();
                let yi = pool.y.row(i).transpose();
                self.residual_gradient(&a, &xi, &yi)
            }
            _ => {
                let xi = self.dataset.sample_features(rng);
                let mut yi = self.dataset.weights() * &xi;
                let tau = self.dataset.noise_std();
                if tau > 0.0 {
                    yi.iter_mut().for_each(|v| {
                        *v += {
                            let z: f64 = StandardNormal.sample(rng);
                            tau * z
                        }
                    });
                }
                self.residual_gradient(&a, &xi, &yi)
            }
        }
    }

    fn batch_gradient(&self, x: &Point, n: usize, rng: &mut Rng) -> Point {
        if self.sampling == Sampling::Fresh
            && n >= SUFFICIENT_STATISTIC_MIN_BATCH
            && n > self.d() + 1
        {
            let a = DMatrix::from_row_slice(self.q(), self.d(), x.as_slice());
            return self.sufficient_statistic_gradient(&a, n, rng);
        }
        let mut acc = self.sample_gradient(x, rng);
        for _ in 1..n {
            acc += self.sample_gradient(x, rng);
        }
        acc / n as f64
    }

    fn full_gradient(&self, x: &Point) -> Option<Point> {
        let a = DMatrix::from_row_slice(self.q(), self.d(), x.as_slice());
        match (&self.sampling, &self.pool) {
            (Sampling::Pool, Some(pool)) => {
                let n = pool.x.nrows() as f64;
                let g =
                    (&a * pool.x.transpose() * &pool.x - pool.y.transpose() * &pool.x) * (2.0 / n);
                Some(RegressionRisk::flatten(&g))
            }
            _ => {
                let delta = a - self.dataset.weights();
                Some(RegressionRisk::flatten(
                    &(delta * self.dataset.second_moment() * 2.0),
                ))
            }
        }
    }
}

/// Population risk and fresh-sampling oracle for the linear regression
/// experiment.
pub fn generate_regression(
    dataset: &GaussianDataset,
) -> Result<(RegressionRisk, RegressionOracle)> {
    if dataset.weights().ncols() != dataset.dim() {
        return Err(Error::DimensionMismatch(format!(
            "weights have {} columns, covariance is {}x{}",
            dataset.weights().ncols(),
            dataset.dim(),
            dataset.dim()
        )));
    }
    let second_moment = dataset.second_moment();
    let lmax = SymmetricEigen::new(second_moment.clone()).eigenvalues.max();
    let risk = RegressionRisk {
        weights: dataset.weights().clone(),
        second_moment,
        noise_var: dataset.noise_std().powi(2),
        lipschitz: 2.0 * lmax,
        minimizer: RegressionRisk::flatten(dataset.weights()),
    };
    let oracle = RegressionOracle {
        dataset: Arc::new(dataset.clone()),
        sampling: Sampling::Fresh,
        pool: None,
    };
    Ok((risk, oracle))
}
