use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{symmetry_defect, Problem};
use crate::{Error, Point, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const NEGATIVE_EIG_TOL: f64 = 1e-10;

/// `f(x) = ½⟨Ax, x⟩ − ⟨b, x⟩ + c` with `A` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
    offset: f64,
    eigenvalues: DVector<f64>,
    lipschitz: f64,
    minimizer: Option<Point>,
    min_value: Option<f64>,
}

/// Builds the quadratic `½⟨Ax, x⟩ − ⟨b, x⟩`.
///
/// `L` is the largest eigenvalue of `A` (or 1 when `A = 0`, where every
/// positive constant is valid). When `A` is positive definite the minimizer
/// solves `Ax = b`. A singular `A` gives the minimum-norm minimizer when `b ∈ range(A)`;
/// otherwise the problem is unbounded below and both stay unset.
pub fn make_quadratic(a: DMatrix<f64>, b: DVector<f64>) -> Result<Quadratic> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, b has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if a.nrows() == 0 {
        return Err(Error::invalid("A", "empty matrix"));
    }
    let scale = 1.0 + a.amax();
    let asymmetry = symmetry_defect(&a);
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let sym = (&a + a.transpose()) * 0.5;
    let eigenvalues = SymmetricEigen::new(sym.clone()).eigenvalues;
    let lmin = eigenvalues.min();
    let lmax = eigenvalues.max();
    if lmin < -NEGATIVE_EIG_TOL * scale {
        return Err(Error::NotPositiveSemidefinite { eigenvalue: lmin });
    }
    let lipschitz = if lmax > 0.0 { lmax } else { 1.0 };

    let (minimizer, min_value) = if lmin > 1e-12 * lmax.max(f64::MIN_POSITIVE) {
        match sym.clone().cholesky() {
            Some(ch) => {
                let x = ch.solve(&b);
                let v = -0.5 * b.dot(&x);
                (Some(x), Some(v))
            }
            None => (None, None),
        }
    } else {
        // Minimum-norm minimizer when b lies in range(A); unbounded otherwise.
        let eig = SymmetricEigen::new(sym.clone());
        let tol = 1e-12 * lmax.max(f64::MIN_POSITIVE);
        let mut x = DVector::zeros(b.len());
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > tol {
                let u = eig.eigenvectors.column(i);
                x += u * (u.dot(&b) / l);
            }
        }
        let residual = (&sym * &x - &b).amax();
        if residual <= 1e-9 * (1.0 + b.amax()) {
            let v = -0.5 * b.dot(&x);
            (Some(x), Some(v))
        } else {
            (None, None)
        }
    };

    Ok(Quadratic {
        a: sym,
        b,
        offset: 0.0,
        eigenvalues,
        lipschitz,
        minimizer,
        min_value,
    })
}

impl Quadratic {
    /// Diagonal quadratic `½ Σ dᵢ xᵢ²`.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        make_quadratic(
            DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
            DVector::zeros(n),
        )
    }

    /// Adds a constant to the objective.
    pub fn with_offset(mut self, c: f64) -> Self {
        self.offset = c;
        self.min_value = self.min_value.map(|m| m + c);
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn linear_term(&self) -> &DVector<f64> {
        &self.b
    }

    /// Eigenvalues in the order returned by the symmetric solver.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// `λmax / λmin`; infinite for singular matrices.
    pub fn condition_number(&self) -> f64 {
        let lmin = self.eigenvalues.min();
        if lmin <= 0.0 {
            f64::INFINITY
        } else {
            self.eigenvalues.max() / lmin
        }
    }
}

impl Problem for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &Point) -> f64 {
        0.5 * (&self.a * x).dot(x) - self.b.dot(x) + self.offset
    }

    fn gradient(&self, x: &Point) -> Point {
        &self.a * x - &self.b
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn min_value(&self) -> Option<f64> {
        self.min_value
    }

    fn minimizer(&self) -> Option<&Point> {
        self.minimizer.as_ref()
    }

    fn quadratic_form(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        Some((self.a.clone(), self.b.clone()))
    }
}
