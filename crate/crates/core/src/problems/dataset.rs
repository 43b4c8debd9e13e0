use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::symmetry_defect;
use crate::rng::{Role, SampleStream};
use crate::{Error, Result};

/// Serializable description of a Gaussian dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Rows of the true weight matrix `M` (one row per output).
    pub weights: Vec<Vec<f64>>,
    pub seed: u64,
    pub n_samples: usize,
    /// Standard deviation of additive Gaussian observation noise on
    /// regression targets. Zero gives `Y = MX` exactly.
    #[serde(default)]
    pub noise_std: f64,
}

/// Features `X ~ N(m, Σ)` with a fixed ground-truth weight matrix.
#[derive(Debug, Clone)]
pub struct GaussianDataset {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cholesky: DMatrix<f64>,
    weights: DMatrix<f64>,
    n_samples: usize,
    seed: u64,
    noise_std: f64,
}

impl GaussianDataset {
    pub fn new(spec: &DatasetSpec) -> Result<Self> {
        let d = spec.mean.len();
        if d == 0 {
            return Err(Error::invalid("mean", "empty"));
        }
        if spec.covariance.len() != d || spec.covariance.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be {d}x{d} to match the mean"
            )));
        }
        if spec.weights.is_empty() || spec.weights.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "weights must have rows of length {d}"
            )));
        }
        if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std", "must be finite and >= 0"));
        }
        let covariance = DMatrix::from_fn(d, d, |i, j| spec.covariance[i][j]);
        let weights = DMatrix::from_fn(spec.weights.len(), d, |i, j| spec.weights[i][j]);
        Self::from_parts(
            DVector::from_column_slice(&spec.mean),
            covariance,
            weights,
            spec.n_samples,
            spec.seed,
            spec.noise_std,
        )
    }

    fn from_parts(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        weights: DMatrix<f64>,
        n_samples: usize,
        seed: u64,
        noise_std: f64,
    ) -> Result<Self> {
        if symmetry_defect(&covariance) > 1e-12 * (1.0 + covariance.amax()) {
            return Err(Error::NotPositiveDefinite);
        }
        let cholesky = covariance
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        Ok(Self {
            mean,
            covariance,
            cholesky,
            weights,
            n_samples,
            seed,
            noise_std,
        })
    }

    /// `m = 0`, `Σ = I`, weights uniform in (−1, 1) drawn from `seed`.
    pub fn standard(dim: usize, outputs: usize, n_samples: usize, seed: u64) -> Self {
        let mut rng = SampleStream::new(seed).fork(0xda7a).rng(0, Role::Aux);
        let weights = DMatrix::from_fn(outputs, dim, |_, _| rng.random_range(-1.0..1.0));
        Self::from_parts(
            DVector::zeros(dim),
            DMatrix::identity(dim, dim),
            weights,
            n_samples,
            seed,
            0.0,
        )
        .expect("identity covariance is positive definite")
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    /// Rescales feature `index` by `factor`: `Σ ← DΣD`, `m ← Dm`.
    pub fn scale_feature(&self, index: usize, factor: f64) -> Result<Self> {
        let d = self.dim();
        if index >= d {
            return Err(Error::invalid(
                "index",
                format!("feature {index} out of range"),
            ));
        }
        let mut scale = DVector::from_element(d, 1.0);
        scale[index] = factor;
        let cov = DMatrix::from_fn(d, d, |i, j| self.covariance[(i, j)] * scale[i] * scale[j]);
        let mean = self.mean.component_mul(&scale);
        Self::from_parts(
            mean,
            cov,
            self.weights.clone(),
            self.n_samples,
            self.seed,
            self.noise_std,
        )
    }

    /// Scales the last feature up until `cond(Σ + mmᵀ)` reaches `target`.
    pub fn with_condition_number(&self, target: f64) -> Result<Self> {
        let last = self.dim() - 1;
        let cond_at = |c: f64| -> Result<f64> {
            Ok(condition(&self.scale_feature(last, c)?.second_moment()))
        };
        let base = cond_at(1.0)?;
        if target.is_nan() || target < 1.0 {
            return Err(Error::invalid("condition_number", "must be >= 1"));
        }
        if base > target {
            return Err(Error::invalid(
                "condition_number",
                format!("base condition {base:.3} already exceeds target"),
            ));
        }
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        while cond_at(hi)? < target {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::invalid("condition_number", "target not reachable"));
            }
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if cond_at(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-14 {
                break;
            }
        }
        self.scale_feature(last, hi)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower-triangular `L` with `LLᵀ = Σ`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// `E[XXᵀ] = Σ + mmᵀ`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        &self.covariance + &self.mean * self.mean.transpose()
    }

    pub fn sample_features<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + &self.cholesky * z
    }

    /// Draws `n` feature rows (`n × d`).
    pub fn sample_matrix<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, self.dim());
        for i in 0..n {
            out.set_row(i, &self.sample_features(rng).transpose());
        }
        out
    }

    pub fn to_spec(&self) -> DatasetSpec {
        let d = self.dim();
        DatasetSpec {
            mean: self.mean.iter().copied().collect(),
            covariance: (0..d)
                .map(|i| (0..d).map(|j| self.covariance[(i, j)]).collect())
                .collect(),
            weights: (0..self.outputs())
                .map(|i| self.weights.row(i).iter().copied().collect())
                .collect(),
            seed: self.seed,
            n_samples: self.n_samples,
            noise_std: self.noise_std,
        }
    }
}

pub(crate) fn condition(m: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    ev.max() / ev.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spec_round_trip() {
        let ds = GaussianDataset::standard(6, 1, 100, 3);
        let json = serde_json::to_string(&ds.to_spec()).unwrap();
        let back: DatasetSpec = serde_json::from_str(&json).unwrap();
        let ds2 = GaussianDataset::new(&back).unwrap();
        assert_eq!(ds2.weights(), ds.weights());
        assert_eq!(ds2.covariance(), ds.covariance());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<DatasetSpec>(
            r#"{"mean":[0],"covariance":[[1]],"weights":[[1]],"seed":1,"n_samples":2,"bogus":1}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn non_pd_covariance_rejected() {
        let spec = DatasetSpec {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
            weights: vec![vec![1.0, 1.0]],
            seed: 0,
            n_samples: 10,
            noise_std: 0.0,
        };
        assert!(matches!(
            GaussianDataset::new(&spec),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn weight_dimension_mismatch() {
        let spec = DatasetSpec {
            mean: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            weights: vec![vec![1.0, 1.0, 1.0]],
            seed: 0,
            n_samples: 10,
            noise_std: 0.0,
        };
        assert!(matches!(
            GaussianDataset::new(&spec),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn conditioning_knob_hits_target() {
        let ds = GaussianDataset::standard(6, 1, 10, 1)
            .with_condition_number(1000.0)
            .unwrap();
        let c = condition(&ds.second_moment());
        assert_relative_eq!(c, 1000.0, max_relative = 1e-9);
        assert_relative_eq!(ds.covariance()[(5, 5)], 1000.0, max_relative = 1e-9);
    }

    #[test]
    fn empirical_mean_within_five_standard_errors() {
        let spec = DatasetSpec {
            mean: vec![1.0, -2.0, 0.5],
            covariance: vec![
                vec![2.0, 0.3, 0.0],
                vec![0.3, 1.0, -0.2],
                vec![0.0, -0.2, 0.5],
            ],
            weights: vec![vec![1.0, 0.0, 0.0]],
            seed: 11,
            n_samples: 100_000,
            noise_std: 0.0,
        };
        let ds = GaussianDataset::new(&spec).unwrap();
        let mut rng = SampleStream::new(5).rng(0, Role::Aux);
        let n = 100_000;
        let x = ds.sample_matrix(n, &mut rng);
        for j in 0..3 {
            let mean = x.column(j).mean();
            let se = (ds.covariance()[(j, j)] / n as f64).sqrt();
            assert!(
                (mean - ds.mean()[j]).abs() < 5.0 * se,
                "feature {j}: {mean}"
            );
        }
    }

    #[test]
    fn seeded_sampling_is_bit_identical() {
        let ds = GaussianDataset::standard(4, 2, 10, 9);
        let a = ds.sample_matrix(50, &mut SampleStream::new(1).rng(2, Role::X));
        let b = ds.sample_matrix(50, &mut SampleStream::new(1).rng(2, Role::X));
        assert_eq!(a, b);
        assert_eq!(
            ds.weights(),
            GaussianDataset::standard(4, 2, 10, 9).weights()
        );
    }
}
