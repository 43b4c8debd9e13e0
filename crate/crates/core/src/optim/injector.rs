use crate::Point;

/// Deterministic gradient errors `M^x_k`, `M^y_k` added to exact gradients.
pub trait ErrorInjector: Send + Sync {
    fn x_error(&self, k: usize, x: &Point) -> Point;
    fn y_error(&self, k: usize, y: &Point) -> Point;

    /// True when both errors are identically zero (lets steppers skip work).
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroErrors;

impl ErrorInjector for ZeroErrors {
    fn x_error(&self, _k: usize, x: &Point) -> Point {
        Point::zeros(x.len())
    }

    fn y_error(&self, _k: usize, y: &Point) -> Point {
        Point::zeros(y.len())
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// `‖M^x_k‖ = a·k^{−p}`, `‖M^y_k‖ = b·k^{−p}` along a fixed unit direction
/// (the normalized all-ones vector unless given).
#[derive(Debug, Clone)]
pub struct PowerLawErrors {
    pub x_scale: f64,
    pub y_scale: f64,
    pub exponent: f64,
    pub direction: Option<Point>,
}

impl PowerLawErrors {
    pub fn new(scale: f64, exponent: f64) -> Self {
        Self {
            x_scale: scale,
            y_scale: scale,
            exponent,
            direction: None,
        }
    }

    fn error(&self, scale: f64, k: usize, dim: usize) -> Point {
        let magnitude = scale * (k.max(1) as f64).powf(-self.exponent);
        match &self.direction {
            Some(d) => d.normalize() * magnitude,
            None => Point::from_element(dim, magnitude / (dim as f64).sqrt()),
        }
    }
}

impl ErrorInjector for PowerLawErrors {
    fn x_error(&self, k: usize, x: &Point) -> Point {
        self.error(self.x_scale, k, x.len())
    }

    fn y_error(&self, k: usize, y: &Point) -> Point {
        self.error(self.y_scale, k, y.len())
    }

    fn is_zero(&self) -> bool {
        self.x_scale == 0.0 && self.y_scale == 0.0
    }
}

/// Errors given by closures of `(k, point)`.
pub struct FnInjector<F, G> {
    pub x: F,
    pub y: G,
}

impl<F, G> ErrorInjector for FnInjector<F, G>
where
    F: Fn(usize, &Point) -> Point + Send + Sync,
    G: Fn(usize, &Point) -> Point + Send + Sync,
{
    fn x_error(&self, k: usize, x: &Point) -> Point {
        (self.x)(k, x)
    }

    fn y_error(&self, k: usize, y: &Point) -> Point {
        (self.y)(k, y)
    }
}
