use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Problem;
use crate::rng::Rng;
use crate::{Error, Point, Result};

/// Where an oracle draws its samples from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Fresh i.i.d. draws from the data distribution.
    #[default]
    Fresh,
    /// Uniform draws with replacement from the fixed sample pool.
    Pool,
}

/// Source of unbiased per-sample gradients `∇F(x, ζ)`, `ζ ~ μ`.
pub trait StochasticOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// One per-sample gradient at `x` with a fresh `ζ`.
    fn sample_gradient(&self, x: &Point, rng: &mut Rng) -> Point;

    /// Average of `n` i.i.d. per-sample gradients. Implementations may
    /// override this with any sampler that has the same distribution.
    fn batch_gradient(&self, x: &Point, n: usize, rng: &mut Rng) -> Point {
        let mut acc = self.sample_gradient(x, rng);
        for _ in 1..n {
            acc += self.sample_gradient(x, rng);
        }
        acc / n as f64
    }

    /// `E_ζ[∇F(x, ζ)]`, when it can be evaluated.
    fn full_gradient(&self, x: &Point) -> Option<Point>;
}

/// Minibatch estimate `G = (1/n) Σ ∇F(x, ζᵢ)`.
pub fn minibatch_gradient(
    oracle: &dyn StochasticOracle,
    x: &Point,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Point> {
    if batch_size == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(oracle.batch_gradient(x, batch_size, rng))
}

/// Zero-variance oracle: every sample returns the exact gradient.
#[derive(Clone)]
pub struct DeterministicOracle {
    problem: Arc<dyn Problem>,
}

impl DeterministicOracle {
    pub fn new(problem: Arc<dyn Problem>) -> Self {
        Self { problem }
    }
}

impl StochasticOracle for DeterministicOracle {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn sample_gradient(&self, x: &Point, _rng: &mut Rng) -> Point {
        self.problem.gradient(x)
    }

    fn batch_gradient(&self, x: &Point, _n: usize, _rng: &mut Rng) -> Point {
        self.problem.gradient(x)
    }

    fn full_gradient(&self, x: &Point) -> Option<Point> {
        Some(self.problem.gradient(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Quadratic;
    use crate::rng::{Role, SampleStream};
    use nalgebra::dvector;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Cycles through a fixed list of per-sample gradients.
    struct Cycling {
        grads: Vec<Point>,
        next: AtomicUsize,
    }

    impl StochasticOracle for Cycling {
        fn dim(&self) -> usize {
            self.grads[0].len()
        }
        fn sample_gradient(&self, _x: &Point, _rng: &mut Rng) -> Point {
            let i = self.next.fetch_add(1, Ordering::Relaxed);
            self.grads[i % self.grads.len()].clone()
        }
        fn full_gradient(&self, _x: &Point) -> Option<Point> {
            None
        }
    }

    #[test]
    fn batch_of_two_is_the_average() {
        let o = Cycling {
            grads: vec![dvector![1.0, 4.0], dvector![3.0, -2.0]],
            next: AtomicUsize::new(0),
        };
        let mut rng = SampleStream::new(0).rng(1, Role::X);
        let g = minibatch_gradient(&o, &dvector![0.0, 0.0], 2, &mut rng).unwrap();
        assert_eq!(g, dvector![2.0, 1.0]);
    }

    #[test]
    fn zero_batch_rejected() {
        let q: Arc<dyn Problem> = Arc::new(Quadratic::diagonal(&[1.0]).unwrap());
        let o = DeterministicOracle::new(q);
        let mut rng = SampleStream::new(0).rng(1, Role::X);
        assert!(matches!(
            minibatch_gradient(&o, &dvector![1.0], 0, &mut rng),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn zero_variance_is_exact_for_any_batch() {
        let q: Arc<dyn Problem> = Arc::new(Quadratic::diagonal(&[0.3, 7.0, 1.1]).unwrap());
        let o = DeterministicOracle::new(q.clone());
        let x = dvector![0.1, -0.7, 2.3];
        let mut rng = SampleStream::new(0).rng(1, Role::X);
        for n in [1, 2, 3, 7, 1000] {
            assert_eq!(
                minibatch_gradient(&o, &x, n, &mut rng).unwrap(),
                q.gradient(&x)
            );
        }
    }
}
