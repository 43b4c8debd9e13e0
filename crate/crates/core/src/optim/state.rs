use crate::rng::SampleStream;
use crate::Point;

/// Iterate pair `(x_k, x_{k−1})` and the bookkeeping one step needs.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// Iteration counter, starting at 1.
    pub k: usize,
    pub x_curr: Point,
    pub x_prev: Point,
    /// `∇f(x_{k−1}) + M^x_{k−1}` from the previous deterministic step.
    pub prev_perturbed_grad: Option<Point>,
    /// Sample stream of stochastic runs.
    pub stream: Option<SampleStream>,
}

impl OptimizerState {
    /// `x_1 = x_0 = x0`.
    pub fn new(x0: Point) -> Self {
        Self {
            k: 1,
            x_prev: x0.clone(),
            x_curr: x0,
            prev_perturbed_grad: None,
            stream: None,
        }
    }

    pub fn with_stream(mut self, stream: SampleStream) -> Self {
        self.stream = Some(stream);
        self
    }

    pub fn dim(&self) -> usize {
        self.x_curr.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x_curr.iter().all(|v| v.is_finite())
    }
}
